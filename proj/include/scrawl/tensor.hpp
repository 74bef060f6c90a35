#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scrawl {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline size_t numel_of(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
}

enum class Mode { train, infer };

// Dense row-major tensor with value handle semantics. The grad buffer lives
// next to the data and is filled by Tape::backward; ops never mutate their
// inputs' data (parameter updates between steps are the optimizer's job).
template <typename T>
class TensorT {
    struct Storage {
        Shape shape;
        std::vector<T> data;
        bool requires_grad = false;
        std::vector<T> grad;  // lazily sized, zero-filled
    };

public:
    TensorT() : st_(std::make_shared<Storage>()) {}

    explicit TensorT(Shape shape, bool requires_grad = false)
        : st_(std::make_shared<Storage>()) {
        for (int d : shape) {
            if (d <= 0) throw std::runtime_error("tensor: non-positive extent in " + shape_str(shape));
        }
        st_->shape = std::move(shape);
        st_->data.assign(numel_of(st_->shape), T(0));
        st_->requires_grad = requires_grad;
    }

    static TensorT from(Shape shape, std::vector<T> values, bool requires_grad = false) {
        TensorT t(std::move(shape), requires_grad);
        if (values.size() != t.numel())
            throw std::runtime_error("tensor: " + std::to_string(values.size()) + " values for shape " +
                                     shape_str(t.shape()));
        t.st_->data = std::move(values);
        return t;
    }

    static TensorT full(Shape shape, T value, bool requires_grad = false) {
        TensorT t(std::move(shape), requires_grad);
        std::fill(t.st_->data.begin(), t.st_->data.end(), value);
        return t;
    }

    static TensorT scalar(T value, bool requires_grad = false) {
        return full({1}, value, requires_grad);
    }

    const Shape& shape() const { return st_->shape; }
    int dim(int i) const { return st_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(st_->shape.size()); }
    size_t numel() const { return st_->data.size(); }
    bool requires_grad() const { return st_->requires_grad; }
    void set_requires_grad(bool r) { st_->requires_grad = r; }

    T* data() { return st_->data.data(); }
    const T* data() const { return st_->data.data(); }
    std::vector<T>& vec() { return st_->data; }
    const std::vector<T>& vec() const { return st_->data; }

    T item() const {
        if (numel() != 1) throw std::runtime_error("item: tensor of shape " + shape_str(shape()) + " is not scalar");
        return st_->data[0];
    }

    T* grad() {
        ensure_grad();
        return st_->grad.data();
    }
    const std::vector<T>& grad_vec() const {
        const_cast<TensorT*>(this)->ensure_grad();
        return st_->grad;
    }
    void zero_grad() { std::fill(st_->grad.begin(), st_->grad.end(), T(0)); }

    // identity of the underlying storage; two handles to the same tensor compare equal
    const void* id() const { return st_.get(); }
    bool same_storage(const TensorT& o) const { return st_ == o.st_; }

    bool all_finite() const {
        for (T v : st_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    void ensure_grad() {
        if (st_->grad.size() != st_->data.size()) st_->grad.assign(st_->data.size(), T(0));
    }
    std::shared_ptr<Storage> st_;
};

using Tensor = TensorT<float>;

template <typename T>
inline void check_finite(const TensorT<T>& t, const std::string& what) {
    if (!t.all_finite()) throw std::runtime_error(what + ": non-finite values");
}

}  // namespace scrawl
