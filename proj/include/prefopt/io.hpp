// Plain-text serialization for policy checkpoints, worlds, and preference
// datasets.
//
// Policy checkpoint ("prefopt-policy v1"):
//   prefopt-policy v1
//   prompts <P> responses <R> seed <u64>
//   ref_logits
//   <P lines of R space-separated C99 hex floats>
//   logits
//   <P lines of R space-separated C99 hex floats>
//
// World file ("prefopt-world v1"): same layout with a metadata header line
//   prompts <P> responses <R> seed <u64> lambda_len <hexfloat>
// followed by `quality` (hex floats), `length` (integers), and `ref_logits`.
//
// Hex floats make the round-trip bit-exact by construction. Datasets are one
// record per line: "prompt_id,winner_id,loser_id".
#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "prefopt/datagen.hpp"
#include "prefopt/matrix.hpp"
#include "prefopt/policy.hpp"

namespace prefopt {

namespace detail {

inline std::string hex_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline double parse_double_token(const std::string& tok, const char* what) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw std::runtime_error(std::string("cannot parse ") + what + ": \"" +
                             tok + "\"");
  }
  return v;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path.string());
  }
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path.string());
  }
  return out;
}

inline void expect_line(std::istream& in, const std::string& expected,
                        const std::string& file) {
  std::string line;
  if (!std::getline(in, line) || line != expected) {
    throw std::runtime_error(file + ": expected line \"" + expected +
                             "\", got \"" + line + "\"");
  }
}

inline void write_double_matrix(std::ostream& out, const Mat<double>& m) {
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (j) out << ' ';
      out << hex_double(m(i, j));
    }
    out << '\n';
  }
}

inline Mat<double> read_double_matrix(std::istream& in, int rows, int cols,
                                      const std::string& file) {
  Mat<double> m(rows, cols, 0.0);
  for (int i = 0; i < rows; ++i) {
    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error(file + ": unexpected end of file in matrix");
    }
    std::istringstream row(line);
    for (int j = 0; j < cols; ++j) {
      std::string tok;
      if (!(row >> tok)) {
        throw std::runtime_error(file + ": short matrix row " +
                                 std::to_string(i));
      }
      m(i, j) = parse_double_token(tok, "matrix entry");
    }
  }
  return m;
}

}  // namespace detail

// --- policy checkpoints ------------------------------------------------------

inline void save_policy(const PolicyTable& table, std::uint64_t seed,
                        const std::filesystem::path& path) {
  table.validate();
  auto out = detail::open_output(path);
  out << "prefopt-policy v1\n";
  out << "prompts " << table.num_prompts() << " responses "
      << table.num_responses() << " seed " << seed << '\n';
  out << "ref_logits\n";
  detail::write_double_matrix(out, table.ref_logits);
  out << "logits\n";
  detail::write_double_matrix(out, table.logits);
}

struct LoadedPolicy {
  PolicyTable table;
  std::uint64_t seed = 0;
};

inline LoadedPolicy load_policy(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  const std::string file = path.string();
  detail::expect_line(in, "prefopt-policy v1", file);
  std::string tag_prompts, tag_responses, tag_seed;
  int prompts = 0, responses = 0;
  std::uint64_t seed = 0;
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error(file + ": missing shape header");
  }
  std::istringstream hs(header);
  if (!(hs >> tag_prompts >> prompts >> tag_responses >> responses >>
        tag_seed >> seed) ||
      tag_prompts != "prompts" || tag_responses != "responses" ||
      tag_seed != "seed" || prompts < 1 || responses < 1) {
    throw std::runtime_error(file + ": malformed shape header: " + header);
  }
  LoadedPolicy loaded;
  loaded.seed = seed;
  detail::expect_line(in, "ref_logits", file);
  loaded.table.ref_logits =
      detail::read_double_matrix(in, prompts, responses, file);
  detail::expect_line(in, "logits", file);
  loaded.table.logits =
      detail::read_double_matrix(in, prompts, responses, file);
  loaded.table.validate();
  return loaded;
}

// --- worlds ------------------------------------------------------------------

inline void save_world(const World& world, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << "prefopt-world v1\n";
  out << "prompts " << world.num_prompts << " responses "
      << world.num_responses << " seed " << world.seed << " lambda_len "
      << detail::hex_double(world.lambda_len) << '\n';
  out << "quality\n";
  detail::write_double_matrix(out, world.quality);
  out << "length\n";
  for (int i = 0; i < world.length.rows; ++i) {
    for (int j = 0; j < world.length.cols; ++j) {
      if (j) out << ' ';
      out << world.length(i, j);
    }
    out << '\n';
  }
  out << "ref_logits\n";
  detail::write_double_matrix(out, world.ref_logits);
}

inline World load_world(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  const std::string file = path.string();
  detail::expect_line(in, "prefopt-world v1", file);
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error(file + ": missing metadata header");
  }
  std::istringstream hs(header);
  std::string t1, t2, t3, t4, lambda_tok;
  int prompts = 0, responses = 0;
  std::uint64_t seed = 0;
  if (!(hs >> t1 >> prompts >> t2 >> responses >> t3 >> seed >> t4 >>
        lambda_tok) ||
      t1 != "prompts" || t2 != "responses" || t3 != "seed" ||
      t4 != "lambda_len" || prompts < 1 || responses < 1) {
    throw std::runtime_error(file + ": malformed metadata header: " + header);
  }
  World world;
  world.num_prompts = prompts;
  world.num_responses = responses;
  world.seed = seed;
  world.lambda_len = detail::parse_double_token(lambda_tok, "lambda_len");
  detail::expect_line(in, "quality", file);
  world.quality = detail::read_double_matrix(in, prompts, responses, file);
  detail::expect_line(in, "length", file);
  world.length = Mat<int>(prompts, responses, 0);
  for (int i = 0; i < prompts; ++i) {
    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error(file + ": unexpected end of length matrix");
    }
    std::istringstream row(line);
    for (int j = 0; j < responses; ++j) {
      if (!(row >> world.length(i, j)) || world.length(i, j) < 1) {
        throw std::runtime_error(file + ": bad length entry in row " +
                                 std::to_string(i));
      }
    }
  }
  detail::expect_line(in, "ref_logits", file);
  world.ref_logits = detail::read_double_matrix(in, prompts, responses, file);
  normalize_lengths(world);
  return world;
}

// --- preference datasets ------------------------------------------------------

inline void save_dataset(const PreferenceDataset& dataset,
                         const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  for (const PrefRecord& rec : dataset.records) {
    out << rec.prompt << ',' << rec.winner << ',' << rec.loser << '\n';
  }
}

inline PreferenceDataset load_dataset(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  const std::string file = path.string();
  PreferenceDataset dataset;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    PrefRecord rec;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> rec.prompt >> c1 >> rec.winner >> c2 >> rec.loser) ||
        c1 != ',' || c2 != ',' || rec.winner == rec.loser) {
      throw std::runtime_error(file + ": malformed record at line " +
                               std::to_string(line_no) + ": \"" + line + "\"");
    }
    dataset.records.push_back(rec);
  }
  if (dataset.records.empty()) {
    throw std::runtime_error(file + ": dataset is empty");
  }
  return dataset;
}

}  // namespace prefopt
