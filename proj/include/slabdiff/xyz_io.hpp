#pragma once

#include "slabdiff/elements.hpp"
#include "slabdiff/lattice.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace slabdiff {

namespace detail {

struct Token {
  std::string text;
  int col = 0;  // 1-based start column
};

inline std::vector<Token> split_tokens(const std::string& line) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    const size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    out.push_back({line.substr(start, i - start), static_cast<int>(start + 1)});
  }
  return out;
}

inline double parse_double(const Token& tok, int line_no) {
  double value = 0.0;
  const char* begin = tok.text.data();
  const char* end = begin + tok.text.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ParseError("expected a number, got '" + tok.text + "'", line_no, tok.col);
  return value;
}

/// Value of a key="..." entry on the comment line, if present.
inline bool comment_field(const std::string& comment, const std::string& key,
                          std::string* value) {
  size_t at = 0;
  while ((at = comment.find(key, at)) != std::string::npos) {
    const size_t after = at + key.size();
    const bool word_start = at == 0 || std::isspace(static_cast<unsigned char>(comment[at - 1]));
    if (!word_start || after >= comment.size() || comment[after] != '=') {
      at = after;
      continue;
    }
    size_t v = after + 1;
    if (v < comment.size() && comment[v] == '"') {
      const size_t close = comment.find('"', v + 1);
      if (close == std::string::npos) return false;
      *value = comment.substr(v + 1, close - v - 1);
    } else {
      size_t e = v;
      while (e < comment.size() && !std::isspace(static_cast<unsigned char>(comment[e]))) ++e;
      *value = comment.substr(v, e - v);
    }
    return true;
  }
  return false;
}

}  // namespace detail

/// Parse an extended-XYZ structure: count line, comment line with
/// Lattice="9 numbers row-major" and pbc flags, then per-atom lines
/// "symbol x y z tag". A missing tag column tags every atom FREE_SLAB and
/// records a warning. Adslab completeness (slab + adsorbate both present) is
/// the caller's check; files holding a bare slab or molecule parse fine.
inline AdslabSystem parse_structure(std::istream& is, std::vector<std::string>* warnings = nullptr) {
  std::string line;
  int line_no = 0;

  if (!std::getline(is, line)) throw ParseError("empty file", 1, 1);
  ++line_no;
  auto head = detail::split_tokens(line);
  if (head.size() != 1)
    throw ParseError("expected the atom count alone on the first line", line_no,
                     head.empty() ? 1 : head[0].col);
  int n_atoms = 0;
  {
    const auto& tok = head[0];
    const auto res =
        std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), n_atoms);
    if (res.ec != std::errc{} || res.ptr != tok.text.data() + tok.text.size() || n_atoms < 1)
      throw ParseError("bad atom count '" + tok.text + "'", line_no, tok.col);
  }

  if (!std::getline(is, line)) throw ParseError("missing comment line", 2, 1);
  ++line_no;
  std::string lattice_text;
  if (!detail::comment_field(line, "Lattice", &lattice_text) &&
      !detail::comment_field(line, "lattice", &lattice_text))
    throw MissingLattice("no Lattice=\"...\" on the comment line");
  const auto lat_tokens = detail::split_tokens(lattice_text);
  if (lat_tokens.size() != 9)
    throw ParseError("Lattice needs 9 numbers, got " + std::to_string(lat_tokens.size()),
                     line_no, 1);
  Mat3 basis;
  for (int k = 0; k < 9; ++k)
    basis(k / 3, k % 3) = detail::parse_double(lat_tokens[static_cast<size_t>(k)], line_no);

  std::array<bool, 3> pbc = {true, true, false};
  std::string pbc_text;
  if (detail::comment_field(line, "pbc", &pbc_text)) {
    const auto flags = detail::split_tokens(pbc_text);
    if (flags.size() != 3) throw ParseError("pbc needs 3 flags", line_no, 1);
    for (int k = 0; k < 3; ++k) {
      const std::string& f = flags[static_cast<size_t>(k)].text;
      if (f == "T" || f == "true" || f == "True" || f == "1")
        pbc[static_cast<size_t>(k)] = true;
      else if (f == "F" || f == "false" || f == "False" || f == "0")
        pbc[static_cast<size_t>(k)] = false;
      else
        throw ParseError("bad pbc flag '" + f + "'", line_no, flags[static_cast<size_t>(k)].col);
    }
  } else if (warnings) {
    warnings->push_back("no pbc field; assuming slab periodicity T T F");
  }

  AdslabSystem sys;
  sys.cell = LatticeCell(basis, pbc);
  sys.positions.resize(n_atoms, 3);
  sys.species.reserve(static_cast<size_t>(n_atoms));
  sys.tags.reserve(static_cast<size_t>(n_atoms));
  bool tag_warning = false;

  for (int a = 0; a < n_atoms; ++a) {
    if (!std::getline(is, line))
      throw ParseError("expected " + std::to_string(n_atoms) + " atom lines, got " +
                           std::to_string(a),
                       line_no + 1, 1);
    ++line_no;
    const auto toks = detail::split_tokens(line);
    if (toks.size() != 4 && toks.size() != 5)
      throw ParseError("expected 'symbol x y z [tag]'", line_no, toks.empty() ? 1 : toks[0].col);
    sys.species.push_back(atomic_number_for(toks[0].text));
    for (int d = 0; d < 3; ++d)
      sys.positions(a, d) = detail::parse_double(toks[static_cast<size_t>(d + 1)], line_no);
    if (toks.size() == 5) {
      const auto& tok = toks[4];
      int tag = -1;
      const auto res =
          std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), tag);
      if (res.ec != std::errc{} || res.ptr != tok.text.data() + tok.text.size() || tag < 0 ||
          tag > 2)
        throw ParseError("bad tag '" + tok.text + "' (want 0, 1, or 2)", line_no, tok.col);
      sys.tags.push_back(static_cast<AtomTag>(tag));
    } else {
      sys.tags.push_back(AtomTag::FreeSlab);
      tag_warning = true;
    }
  }
  if (tag_warning && warnings)
    warnings->push_back("tag column absent; all untagged atoms treated as FREE_SLAB");
  return sys;
}

inline AdslabSystem parse_structure_file(const std::string& path,
                                         std::vector<std::string>* warnings = nullptr) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open structure file: " + path);
  return parse_structure(is, warnings);
}

/// Extended-XYZ writer, 12 significant digits, tags always present.
inline void write_structure(std::ostream& os, const AdslabSystem& sys) {
  char buf[64];
  os << sys.size() << '\n';
  os << "Lattice=\"";
  for (int k = 0; k < 9; ++k) {
    std::snprintf(buf, sizeof(buf), "%.12g", sys.cell.basis()(k / 3, k % 3));
    os << buf << (k + 1 < 9 ? " " : "");
  }
  os << "\" Properties=species:S:1:pos:R:3:tags:I:1 pbc=\"";
  for (int k = 0; k < 3; ++k) os << (sys.cell.pbc()[static_cast<size_t>(k)] ? "T" : "F")
                                 << (k + 1 < 3 ? " " : "");
  os << "\"\n";
  for (Eigen::Index a = 0; a < sys.size(); ++a) {
    os << symbol_for(sys.species[static_cast<size_t>(a)]);
    for (int d = 0; d < 3; ++d) {
      std::snprintf(buf, sizeof(buf), "%.12g", sys.positions(a, d));
      os << ' ' << buf;
    }
    os << ' ' << static_cast<int>(sys.tags[static_cast<size_t>(a)]) << '\n';
  }
}

inline void write_structure_file(const std::string& path, const AdslabSystem& sys) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open structure file for writing: " + path);
  write_structure(os, sys);
  if (!os) throw Error("short write to structure file: " + path);
}

}  // namespace slabdiff
