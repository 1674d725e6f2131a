#include "ps/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ps {

template <typename T>
bool Tensor<T>::all_finite() const {
    for (const T& v : data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

template struct Tensor<float>;
template struct Tensor<double>;

}  // namespace ps
