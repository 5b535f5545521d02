#pragma once

#include <bitset>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sempipes {

/// Shared step allowance for every regex run inside one evaluation. Each
/// (thread, input byte) pair the VM visits costs one step.
class RegexBudget {
 public:
  explicit RegexBudget(std::uint64_t steps) : remaining_(steps) {}
  void charge(std::uint64_t steps);
  std::uint64_t remaining() const { return remaining_; }

 private:
  std::uint64_t remaining_;
};

struct RegexMatch {
  // Group 0 is the whole match; unset groups are nullopt. Offsets are byte
  // positions [begin, end).
  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> groups;

  std::optional<std::string_view> group(std::string_view text, std::size_t i) const;
};

/// Byte-oriented regular expressions executed by a Pike VM: no
/// backtracking, run time linear in |text| x |program|.
///
/// Supported: literals, `.`, classes `[a-z]` / `[^...]`, escapes `\d \w \s`
/// (and negations), `\b \B ^ $`, groups `( )` and `(?: )`, alternation,
/// quantifiers `* + ? {n} {n,} {n,m}` with lazy `?` suffixes, and a leading
/// `(?i)`.
class Regex {
 public:
  static Regex compile(std::string_view pattern, bool case_insensitive = false);

  /// Leftmost match starting at or after `from`; alternatives prefer the
  /// leftmost branch, greedy quantifiers the longest repetition.
  std::optional<RegexMatch> search(std::string_view text, RegexBudget& budget,
                                   std::size_t from = 0) const;
  bool contains_match(std::string_view text, RegexBudget& budget) const {
    return search(text, budget).has_value();
  }
  /// Replaces every non-overlapping match. `$n` or `\n` in `replacement`
  /// inserts group n; `$$` is a literal dollar.
  std::string replace_all(std::string_view text, std::string_view replacement,
                          RegexBudget& budget) const;

  std::size_t group_count() const { return groups_; }
  const std::string& pattern() const { return pattern_; }
  bool case_insensitive() const { return icase_; }
  std::size_t program_size() const { return program_.size(); }

  enum class OpCode : std::uint8_t { Bytes, Split, Jump, Save, Assert, Match };
  enum class Anchor : std::uint8_t { LineStart, LineEnd, WordBoundary, NotWordBoundary };

  struct Instruction {
    OpCode op;
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    Anchor anchor = Anchor::LineStart;
    std::bitset<256> bytes{};
  };

 private:
  std::string pattern_;
  bool icase_ = false;
  std::size_t groups_ = 0;  // capturing groups, excluding group 0
  std::vector<Instruction> program_;
};

}  // namespace sempipes
