#include "kexfp/fingerprint.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

namespace kexfp {

namespace {

struct Parser {
    const std::string& text;
    size_t pos = 0;
    std::vector<std::string>* warnings;

    void skip_ws() {
        while (pos < text.size() &&
               std::isspace(static_cast<unsigned char>(text[pos])))
            ++pos;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error("fingerprint syntax error at byte " + std::to_string(pos) +
                    ": " + what);
    }

    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos;
    }

    size_t parse_int() {
        skip_ws();
        size_t start = pos;
        while (pos < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[pos])))
            ++pos;
        if (pos == start) fail("expected a number");
        return std::stoull(text.substr(start, pos - start));
    }

    Unit parse_unit() {
        char sign = peek();
        if (sign != '0' && sign != '1') fail("expected sign '0' or '1'");
        ++pos;
        expect('{');
        size_t lo = parse_int();
        expect(',');
        size_t hi = parse_int();
        expect('}');
        if (hi < lo) fail("inverted quantifier bounds");
        if (hi == 0) fail("quantifier maximum must be positive");
        return Unit{static_cast<uint8_t>(sign - '0'), lo, hi};
    }

    Group parse_group() {
        expect('(');
        Group group;
        group.alternatives.push_back(parse_seq(true));
        while (peek() == '|') {
            ++pos;
            group.alternatives.push_back(parse_seq(true));
        }
        expect(')');
        if (peek() == '?') {
            ++pos;
            group.optional = true;
        }
        return group;
    }

    std::vector<Element> parse_seq(bool inside_group) {
        std::vector<Element> seq;
        for (;;) {
            char c = peek();
            if (c == '0' || c == '1') {
                Unit unit = parse_unit();
                if (!seq.empty()) {
                    const Unit* prev = std::get_if<Unit>(&seq.back());
                    if (prev && prev->sign == unit.sign) {
                        // Strict alternation holds between plain units at the
                        // top level; inside groups it is lint only.
                        if (!inside_group)
                            fail("adjacent units must alternate sign");
                        if (warnings)
                            warnings->push_back(
                                "adjacent units share sign " +
                                std::to_string(unit.sign) + " near byte " +
                                std::to_string(pos));
                    }
                }
                seq.push_back(unit);
            } else if (c == '(') {
                seq.push_back(parse_group());
            } else {
                break;
            }
        }
        if (seq.empty())
            fail(inside_group ? "empty alternative" : "empty fingerprint");
        return seq;
    }
};

void render_seq(const std::vector<Element>& seq, std::string& out) {
    for (const auto& element : seq) {
        if (const Unit* unit = std::get_if<Unit>(&element)) {
            out += unit->sign ? '1' : '0';
            out += '{';
            out += std::to_string(unit->lo);
            out += ',';
            out += std::to_string(unit->hi);
            out += '}';
        } else {
            const Group& group = std::get<Group>(element);
            out += '(';
            for (size_t i = 0; i < group.alternatives.size(); ++i) {
                if (i) out += '|';
                render_seq(group.alternatives[i], out);
            }
            out += ')';
            if (group.optional) out += '?';
        }
    }
}

// Greedy backtracking over the AST with an explicit continuation.
using Cont = std::function<bool(size_t)>;

bool match_seq(std::span<const uint8_t> labels,
               const std::vector<Element>& seq, size_t idx, size_t pos,
               const Cont& cont) {
    if (idx == seq.size()) return cont(pos);
    const Element& element = seq[idx];
    if (const Unit* unit = std::get_if<Unit>(&element)) {
        size_t avail = 0;
        while (pos + avail < labels.size() &&
               labels[pos + avail] == unit->sign)
            ++avail;
        size_t max_take = std::min(avail, unit->hi);
        if (max_take < unit->lo) return false;
        for (size_t take = max_take + 1; take-- > unit->lo;)
            if (match_seq(labels, seq, idx + 1, pos + take, cont)) return true;
        return false;
    }
    const Group& group = std::get<Group>(element);
    Cont after = [&](size_t p) {
        return match_seq(labels, seq, idx + 1, p, cont);
    };
    for (const auto& alternative : group.alternatives)
        if (match_seq(labels, alternative, 0, pos, after)) return true;
    if (group.optional) return after(pos);
    return false;
}

}  // namespace

Fingerprint parse_fingerprint(const std::string& text,
                              std::vector<std::string>* warnings) {
    Parser parser{text, 0, warnings};
    Fingerprint fp;
    fp.ast = parser.parse_seq(false);
    if (parser.peek() != '\0') parser.fail("trailing input");
    return fp;
}

std::string render(const Fingerprint& fp) {
    std::string out;
    render_seq(fp.ast, out);
    return out;
}

Matcher::Matcher(Fingerprint fp) : fp_(std::move(fp)) {}

MatchResult Matcher::match(std::span<const uint8_t> labels) const {
    MatchResult result;
    result.fingerprint_name = fp_.name;

    auto try_from = [&](size_t start) {
        size_t end = start;
        Cont accept = [&](size_t p) {
            if (fp_.anchor_mode == AnchorMode::Exact && p != labels.size())
                return false;
            end = p;
            return true;
        };
        if (!match_seq(labels, fp_.ast, 0, start, accept)) return false;
        result.matched = true;
        result.span_start = start;
        result.span_end = end > start ? end - 1 : start;
        return true;
    };

    if (fp_.anchor_mode == AnchorMode::Search) {
        for (size_t start = 0; start <= labels.size(); ++start)
            if (try_from(start)) break;
    } else {
        try_from(0);
    }
    return result;
}

MatchResult match_labels(const Matcher& matcher,
                         std::span<const uint8_t> labels) {
    return matcher.match(labels);
}

std::string anchor_mode_name(AnchorMode mode) {
    switch (mode) {
        case AnchorMode::Prefix: return "prefix";
        case AnchorMode::Search: return "search";
        case AnchorMode::Exact: return "exact";
    }
    return "prefix";
}

std::vector<Fingerprint> parse_fingerprint_file(const std::string& text) {
    std::vector<Fingerprint> fingerprints;
    std::istringstream in(text);
    std::string line;
    std::string name, anchor, pattern;

    auto flush = [&]() {
        if (name.empty() && pattern.empty()) return;
        if (name.empty()) throw Error("fingerprint file: missing name line");
        if (pattern.empty())
            throw Error("fingerprint file: missing pattern for " + name);
        Fingerprint fp = parse_fingerprint(pattern);
        fp.name = name;
        if (anchor.empty() || anchor == "prefix")
            fp.anchor_mode = AnchorMode::Prefix;
        else if (anchor == "exact")
            fp.anchor_mode = AnchorMode::Exact;
        else if (anchor == "search")
            fp.anchor_mode = AnchorMode::Search;
        else
            throw Error("fingerprint file: unknown anchor mode '" + anchor +
                        "'");
        fingerprints.push_back(std::move(fp));
        name.clear();
        anchor.clear();
        pattern.clear();
    };

    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
            line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        if (line[0] == '#') continue;
        auto colon = line.find(':');
        if (colon == std::string::npos)
            throw Error("fingerprint file: malformed line: " + line);
        std::string key = line.substr(0, colon);
        std::string value = line.substr(colon + 1);
        size_t first = value.find_first_not_of(' ');
        value = first == std::string::npos ? "" : value.substr(first);
        if (key == "name")
            name = value;
        else if (key == "anchor")
            anchor = value;
        else if (key == "pattern")
            pattern = value;
        else
            throw Error("fingerprint file: unknown key '" + key + "'");
    }
    flush();
    return fingerprints;
}

std::vector<Fingerprint> load_fingerprint_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read fingerprint file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_fingerprint_file(buf.str());
}

}  // namespace kexfp
