#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace layopt {

// Tile types of a warehouse grid. DummySource is only ever produced inside a
// repair model and is never written to disk or simulated.
enum class Tile : std::uint8_t {
  Shelf,
  Endpoint,
  Workstation,
  HomeLocation,
  Empty,
  DummySource,
};

inline constexpr int kNumPersistedTiles = 5;

enum class Scenario { HomeLocation, Workstation };

char tile_char(Tile t);
std::optional<Tile> tile_from_char(char c);
std::string_view scenario_name(Scenario s);
Scenario scenario_from_name(std::string_view name);

inline bool traversable(Tile t) { return t != Tile::Shelf; }

struct Cell {
  int row = 0;
  int col = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct Rect {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;

  bool contains(Cell c) const {
    return c.row >= row && c.row < row + height && c.col >= col && c.col < col + width;
  }
  int area() const { return height * width; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Row-major grid of tiles plus the rectangle the optimizer is allowed to edit.
class Layout {
 public:
  Layout() = default;
  Layout(int height, int width, Rect storage, Tile fill = Tile::Empty);

  int height() const { return height_; }
  int width() const { return width_; }
  int size() const { return height_ * width_; }
  const Rect& storage() const { return storage_; }

  int index(Cell c) const { return c.row * width_ + c.col; }
  Cell cell(int index) const { return {index / width_, index % width_}; }
  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_;
  }
  bool in_storage(int index) const { return storage_.contains(cell(index)); }

  Tile at(Cell c) const { return tiles_[index(c)]; }
  Tile at(int index) const { return tiles_[index]; }
  void set(Cell c, Tile t) { tiles_[index(c)] = t; }
  void set(int index, Tile t) { tiles_[index] = t; }
  const std::vector<Tile>& tiles() const { return tiles_; }

  // 4-neighbors of a tile index, in the fixed order up, left, right, down.
  // Returns the number written into `out`.
  int neighbors(int index, int out[4]) const;

  int count(Tile t) const;
  std::vector<int> indices_of(Tile t) const;
  std::vector<int> storage_indices() const;

  friend bool operator==(const Layout&, const Layout&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  Rect storage_{};
  std::vector<Tile> tiles_;
};

// Text format:
//   type warehouse
//   height H
//   width W
//   storage r0 c0 h w
//   H rows of W characters from {@ e w r .}
Layout parse_layout(std::string_view text);
std::string serialize_layout(const Layout& layout);

// JSON mirror: {"type","height","width","storage":[r0,c0,h,w],"rows":[...]}
Layout layout_from_json(const nlohmann::json& j);
nlohmann::json layout_to_json(const Layout& layout);

Layout read_layout_file(const std::string& path);
void write_layout_file(const std::string& path, const Layout& layout);

// Number of tiles whose type differs. Layouts must share dimensions.
int hamming_distance(const Layout& a, const Layout& b);

}  // namespace layopt
