#include "sgf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace sgf {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid argument";
        case ErrorCode::ShapeMismatch: return "shape mismatch";
        case ErrorCode::UnknownName: return "unknown name";
        case ErrorCode::Io: return "i/o error";
        case ErrorCode::MalformedData: return "malformed data";
        case ErrorCode::DuplicateEntry: return "duplicate entry";
        case ErrorCode::UnsupportedFormat: return "unsupported format";
        case ErrorCode::MalformedCheckpoint: return "malformed checkpoint";
        case ErrorCode::VersionMismatch: return "checkpoint version mismatch";
        case ErrorCode::TruncatedCheckpoint: return "truncated checkpoint";
        case ErrorCode::SchemeMismatch: return "scheme mismatch";
        case ErrorCode::Invariant: return "invariant violation";
    }
    return "unknown error";
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    require(numel(shape_) == data_.size(), ErrorCode::ShapeMismatch,
            "tensor shape " + sgf::to_string(shape_) + " does not hold " +
                std::to_string(data_.size()) + " values");
}

template <class T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
    require(index.size() == shape_.size(), ErrorCode::InvalidArgument,
            "index rank does not match tensor rank");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        require(i < shape_[axis], ErrorCode::InvalidArgument, "index out of range");
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <class T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
    return data_[offset(index)];
}

template <class T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    return data_[offset(index)];
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    require(numel(shape) == data_.size(), ErrorCode::ShapeMismatch,
            "cannot reshape " + sgf::to_string(shape_) + " to " + sgf::to_string(shape));
    return Tensor(std::move(shape), data_);
}

template <class T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <class T>
bool Tensor<T>::all_finite() const {
    for (auto v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

template class Tensor<float>;
template class Tensor<double>;

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
    for (auto& word : state_) word = splitmix64(seed);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) {
    require(bound > 0, ErrorCode::InvalidArgument, "Rng::below needs a positive bound");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % bound;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

void Rng::set_state(const State& state) {
    state_ = state;
    has_spare_ = false;
}

template <class T>
Tensor<T> he_normal_init(Rng& rng, const Shape& shape, std::size_t fan_in) {
    require(fan_in > 0, ErrorCode::InvalidArgument, "he_normal_init: fan_in must be positive");
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor<T> out(shape);
    for (auto& v : out.data()) v = static_cast<T>(stddev * rng.normal());
    return out;
}

template Tensor<float> he_normal_init<float>(Rng&, const Shape&, std::size_t);
template Tensor<double> he_normal_init<double>(Rng&, const Shape&, std::size_t);

}  // namespace sgf
