#ifndef KEXFP_FINGERPRINT_HPP
#define KEXFP_FINGERPRINT_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kexfp/entropy.hpp"

namespace kexfp {

enum class AnchorMode { Prefix, Search, Exact };

struct Unit {
    uint8_t sign = 0;  // 1 = high-entropy, 0 = low-entropy
    size_t lo = 0;
    size_t hi = 0;

    bool operator==(const Unit&) const = default;
};

struct Group;
using Element = std::variant<Unit, Group>;

struct Group {
    std::vector<std::vector<Element>> alternatives;
    bool optional = false;

    bool operator==(const Group&) const = default;
};

struct Fingerprint {
    std::string name;
    std::vector<Element> ast;
    AnchorMode anchor_mode = AnchorMode::Prefix;

    bool operator==(const Fingerprint&) const = default;
};

struct MatchResult {
    bool matched = false;
    size_t span_start = 0;
    size_t span_end = 0;  // inclusive
    std::string fingerprint_name;
};

// Parses the unit DSL:
//   Seq     := Element+
//   Element := Sign '{' Int ',' Int '}' | '(' Seq ('|' Seq)* ')' '?'?
//   Sign    := '0' | '1'
// Whitespace is ignored. Inverted bounds and hi = 0 are rejected. Adjacent
// plain units with equal signs are accepted with a lint warning (collected
// into *warnings when supplied).
Fingerprint parse_fingerprint(const std::string& text,
                              std::vector<std::string>* warnings = nullptr);

// Canonical text without whitespace; parse(render(fp)) == fp structurally.
std::string render(const Fingerprint& fp);

// Interval-quantified matcher over 0/1 label strings. Greedy with
// backtracking: a unit prefers the longest repetition count first, so the
// reported span is the greedy one.
class Matcher {
public:
    explicit Matcher(Fingerprint fp);

    MatchResult match(std::span<const uint8_t> labels) const;
    const Fingerprint& fingerprint() const { return fp_; }

private:
    Fingerprint fp_;
};

inline Matcher compile(Fingerprint fp) { return Matcher(std::move(fp)); }

MatchResult match_labels(const Matcher& matcher,
                         std::span<const uint8_t> labels);

// Fingerprint file: '#' comments; per fingerprint one "name:", one
// "anchor:" and one "pattern:" line; blank lines separate fingerprints.
std::vector<Fingerprint> load_fingerprint_file(const std::string& path);
std::vector<Fingerprint> parse_fingerprint_file(const std::string& text);

std::string anchor_mode_name(AnchorMode mode);

}  // namespace kexfp

#endif
