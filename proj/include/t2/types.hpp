#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace t2 {

enum class Domain : std::uint8_t { A = 0, B = 1 };

inline char domain_char(Domain d) { return d == Domain::A ? 'A' : 'B'; }

// Data/file problems the caller can act on (bad row, missing file, ...).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Broken internal invariant; maps to exit code 70 in the CLI.
class InternalError : public std::logic_error {
 public:
  explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

// One interaction event. feedback is strictly +1 or -1.
struct Interaction {
  std::string user_id;
  int item_id = 0;  // dense id, local to its domain
  Domain domain = Domain::A;
  int feedback = 1;
  std::int64_t timestamp = 0;
};

// Per-user sequences. seq_c is the chronological (stable) merge of
// seq_a and seq_b; filtering seq_c by domain reproduces seq_a / seq_b.
struct UserHistory {
  std::string user_id;
  std::vector<Interaction> seq_a;
  std::vector<Interaction> seq_b;
  std::vector<Interaction> seq_c;
};

// A history slice plus the index of the first event that is an
// evaluation target. Train entries use eval_start = 1 (every position
// with a non-empty prefix is a teacher-forced target).
struct SplitEntry {
  UserHistory history;
  int eval_start = 1;
};

struct DatasetSplit {
  std::vector<SplitEntry> train;
  std::vector<SplitEntry> validation;
  std::vector<SplitEntry> test;
  int items_a = 0;
  int items_b = 0;
};

struct TransitionStats {
  std::int64_t type1 = 0;  // cross-domain (+1 -> -1)
  std::int64_t type2 = 0;  // cross-domain (-1 -> +1)
  std::int64_t other = 0;  // remaining cross-domain adjacent pairs
  std::int64_t cross_total() const { return type1 + type2 + other; }
  double type1_pct() const;
  double type2_pct() const;
  double other_pct() const;
};

}  // namespace t2
