#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lesionattn {

/// Thrown for every contract violation surfaced to callers (bad input,
/// missing files, undefined statistics).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two-level demographic attribute. Index order is fixed: male = 0,
/// female = 1; signed gaps are always reported as male minus female.
enum class Group : std::uint8_t { male = 0, female = 1 };

inline constexpr std::size_t kGroupCount = 2;

inline std::size_t index_of(Group g) { return static_cast<std::size_t>(g); }

inline Group other(Group g) { return g == Group::male ? Group::female : Group::male; }

std::string_view to_string(Group g);

/// Parses "male"/"female" (case-insensitive, also "m"/"f"). Throws on
/// anything else.
Group parse_group(std::string_view text);

/// Dense row-major 2-D array. Used for masks, softened masks, attention
/// maps and gradients.
template <typename T>
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int r, int c, T fill = T{}) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}
  Grid(int r, int c, std::vector<T> v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != static_cast<std::size_t>(r) * c) {
      throw Error("grid: value count does not match shape");
    }
  }

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] bool same_shape(const Grid<T>& o) const { return rows == o.rows && cols == o.cols; }
  template <typename U>
  [[nodiscard]] bool same_shape(const Grid<U>& o) const { return rows == o.rows && cols == o.cols; }

  T& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

  bool operator==(const Grid&) const = default;
};

/// Binary lesion annotation: every entry 0 or 1.
using LesionMask = Grid<std::uint8_t>;

/// Channel-major (C x H x W) image with values in [0, 1].
struct Image {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  bool operator==(const Image&) const = default;
};

std::size_t count_nonzero(const LesionMask& mask);

}  // namespace lesionattn
