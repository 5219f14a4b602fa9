#include "layopt/layout.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace layopt {

char tile_char(Tile t) {
  switch (t) {
    case Tile::Shelf: return '@';
    case Tile::Endpoint: return 'e';
    case Tile::Workstation: return 'w';
    case Tile::HomeLocation: return 'r';
    case Tile::Empty: return '.';
    case Tile::DummySource: return 'd';
  }
  return '?';
}

std::optional<Tile> tile_from_char(char c) {
  switch (c) {
    case '@': return Tile::Shelf;
    case 'e': return Tile::Endpoint;
    case 'w': return Tile::Workstation;
    case 'r': return Tile::HomeLocation;
    case '.': return Tile::Empty;
    default: return std::nullopt;
  }
}

std::string_view scenario_name(Scenario s) {
  return s == Scenario::HomeLocation ? "home" : "workstation";
}

Scenario scenario_from_name(std::string_view name) {
  if (name == "home" || name == "home-location" || name == "home_location") return Scenario::HomeLocation;
  if (name == "workstation") return Scenario::Workstation;
  throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

ParseError::ParseError(const std::string& what, int line, int column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

Layout::Layout(int height, int width, Rect storage, Tile fill)
    : height_(height),
      width_(width),
      storage_(storage),
      tiles_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("layout dimensions must be positive");
  if (storage.row < 0 || storage.col < 0 || storage.height < 0 || storage.width < 0 ||
      storage.row + storage.height > height || storage.col + storage.width > width) {
    throw std::invalid_argument("storage area does not fit inside the grid");
  }
}

int Layout::neighbors(int index, int out[4]) const {
  const int r = index / width_;
  const int c = index % width_;
  int n = 0;
  if (r > 0) out[n++] = index - width_;
  if (c > 0) out[n++] = index - 1;
  if (c + 1 < width_) out[n++] = index + 1;
  if (r + 1 < height_) out[n++] = index + width_;
  return n;
}

int Layout::count(Tile t) const {
  int n = 0;
  for (Tile x : tiles_) n += (x == t);
  return n;
}

std::vector<int> Layout::indices_of(Tile t) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (tiles_[i] == t) out.push_back(i);
  }
  return out;
}

std::vector<int> Layout::storage_indices() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(storage_.area()));
  for (int r = storage_.row; r < storage_.row + storage_.height; ++r) {
    for (int c = storage_.col; c < storage_.col + storage_.width; ++c) out.push_back(index({r, c}));
  }
  return out;
}

namespace {

struct Line {
  std::string_view text;
  int number;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  int number = 1;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(start, end - start);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    lines.push_back({l, number++});
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> tokens(std::string_view l) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < l.size()) {
    while (i < l.size() && l[i] == ' ') ++i;
    std::size_t j = i;
    while (j < l.size() && l[j] != ' ') ++j;
    if (j > i) out.push_back(l.substr(i, j - i));
    i = j;
  }
  return out;
}

int parse_int(std::string_view tok, const Line& line) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    const int col = static_cast<int>(tok.data() - line.text.data()) + 1;
    throw ParseError("expected an integer, got '" + std::string(tok) + "'", line.number, col);
  }
  return value;
}

int header_value(const std::vector<Line>& lines, std::size_t i, std::string_view key) {
  if (i >= lines.size()) throw ParseError("missing '" + std::string(key) + "' header", static_cast<int>(i) + 1, 1);
  const auto toks = tokens(lines[i].text);
  if (toks.size() != 2 || toks[0] != key) {
    throw ParseError("malformed header, expected '" + std::string(key) + " <n>'", lines[i].number, 1);
  }
  return parse_int(toks[1], lines[i]);
}

}  // namespace

Layout parse_layout(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || tokens(lines[0].text) != std::vector<std::string_view>{"type", "warehouse"}) {
    throw ParseError("malformed header, expected 'type warehouse'", 1, 1);
  }
  const int height = header_value(lines, 1, "height");
  const int width = header_value(lines, 2, "width");
  if (height <= 0) throw ParseError("height must be positive", 2, 8);
  if (width <= 0) throw ParseError("width must be positive", 3, 7);
  if (lines.size() < 4) throw ParseError("missing 'storage' header", 4, 1);
  const auto st = tokens(lines[3].text);
  if (st.size() != 5 || st[0] != "storage") {
    throw ParseError("malformed header, expected 'storage r0 c0 h w'", 4, 1);
  }
  const Rect storage{parse_int(st[1], lines[3]), parse_int(st[2], lines[3]), parse_int(st[3], lines[3]),
                     parse_int(st[4], lines[3])};
  if (storage.row < 0 || storage.col < 0 || storage.height < 0 || storage.width < 0 ||
      storage.row + storage.height > height || storage.col + storage.width > width) {
    throw ParseError("storage rectangle out of bounds", 4, 9);
  }

  Layout layout(height, width, storage);
  for (int r = 0; r < height; ++r) {
    const std::size_t li = 4 + static_cast<std::size_t>(r);
    if (li >= lines.size()) {
      throw ParseError("expected " + std::to_string(height) + " grid rows, got " + std::to_string(r),
                       static_cast<int>(li) + 1, 1);
    }
    const Line& line = lines[li];
    if (static_cast<int>(line.text.size()) != width) {
      throw ParseError("ragged row: expected " + std::to_string(width) + " characters, got " +
                           std::to_string(line.text.size()),
                       line.number, std::min<int>(static_cast<int>(line.text.size()), width) + 1);
    }
    for (int c = 0; c < width; ++c) {
      const auto t = tile_from_char(line.text[c]);
      if (!t) {
        throw ParseError(std::string("unknown tile character '") + line.text[c] + "'", line.number, c + 1);
      }
      if ((*t == Tile::Workstation || *t == Tile::HomeLocation) && storage.contains({r, c})) {
        throw ParseError("workstation or home location inside the storage area", line.number, c + 1);
      }
      layout.set(Cell{r, c}, *t);
    }
  }
  for (std::size_t li = 4 + static_cast<std::size_t>(height); li < lines.size(); ++li) {
    if (!lines[li].text.empty()) throw ParseError("unexpected content after grid", lines[li].number, 1);
  }
  return layout;
}

std::string serialize_layout(const Layout& layout) {
  std::string out;
  out.reserve(static_cast<std::size_t>(layout.size() + layout.height() + 64));
  const Rect& s = layout.storage();
  out += "type warehouse\n";
  out += "height " + std::to_string(layout.height()) + "\n";
  out += "width " + std::to_string(layout.width()) + "\n";
  out += "storage " + std::to_string(s.row) + " " + std::to_string(s.col) + " " + std::to_string(s.height) +
         " " + std::to_string(s.width) + "\n";
  for (int r = 0; r < layout.height(); ++r) {
    for (int c = 0; c < layout.width(); ++c) {
      const Tile t = layout.at(Cell{r, c});
      if (t == Tile::DummySource) throw std::logic_error("dummy source tile cannot be serialized");
      out += tile_char(t);
    }
    out += '\n';
  }
  return out;
}

Layout layout_from_json(const nlohmann::json& j) {
  if (j.value("type", std::string()) != "warehouse") throw std::invalid_argument("layout json: type must be 'warehouse'");
  const auto& st = j.at("storage");
  std::ostringstream text;
  text << "type warehouse\nheight " << j.at("height").get<int>() << "\nwidth " << j.at("width").get<int>()
       << "\nstorage " << st.at(0).get<int>() << ' ' << st.at(1).get<int>() << ' ' << st.at(2).get<int>() << ' '
       << st.at(3).get<int>() << '\n';
  for (const auto& row : j.at("rows")) text << row.get<std::string>() << '\n';
  return parse_layout(text.str());
}

nlohmann::json layout_to_json(const Layout& layout) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < layout.height(); ++r) {
    std::string row;
    for (int c = 0; c < layout.width(); ++c) row += tile_char(layout.at(Cell{r, c}));
    rows.push_back(row);
  }
  const Rect& s = layout.storage();
  return {{"type", "warehouse"},
          {"height", layout.height()},
          {"width", layout.width()},
          {"storage", {s.row, s.col, s.height, s.width}},
          {"rows", rows}};
}

Layout read_layout_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open layout file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return layout_from_json(nlohmann::json::parse(text));
  return parse_layout(text);
}

void write_layout_file(const std::string& path, const Layout& layout) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write layout file " + path);
  out << serialize_layout(layout);
}

int hamming_distance(const Layout& a, const Layout& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("hamming distance between layouts of different sizes");
  }
  int d = 0;
  for (int i = 0; i < a.size(); ++i) d += (a.at(i) != b.at(i));
  return d;
}

}  // namespace layopt
