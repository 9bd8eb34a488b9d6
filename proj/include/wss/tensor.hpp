#ifndef WSS_TENSOR_HPP
#define WSS_TENSOR_HPP

#include <cstddef>
#include <vector>

namespace wss {

/// Dense rank-3 tensor, band x time x channel, channel fastest.
template <typename T>
struct Tensor3 {
  int n = 0;
  int l = 0;
  int c = 0;
  std::vector<T> data;

  Tensor3() = default;
  Tensor3(int bands, int length, int channels, T fill = T{})
      : n(bands), l(length), c(channels),
        data(static_cast<std::size_t>(bands) * length * channels, fill) {}

  std::size_t index(int band, int t, int ch) const {
    return (static_cast<std::size_t>(band) * l + t) * c + ch;
  }
  T& operator()(int band, int t, int ch) { return data[index(band, t, ch)]; }
  const T& operator()(int band, int t, int ch) const { return data[index(band, t, ch)]; }

  std::size_t size() const { return data.size(); }
  T* row(int band) { return data.data() + static_cast<std::size_t>(band) * l * c; }
  const T* row(int band) const { return data.data() + static_cast<std::size_t>(band) * l * c; }

  bool same_shape(const Tensor3& o) const { return n == o.n && l == o.l && c == o.c; }

  template <typename U>
  Tensor3<U> cast() const {
    Tensor3<U> out(n, l, c);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace wss

#endif  // WSS_TENSOR_HPP
