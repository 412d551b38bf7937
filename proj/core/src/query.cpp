/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#include <hstream/query.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <sstream>

namespace hstream {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

constexpr std::array kReserved = {"every", "compute", "the",       "value",    "of",    "last",
                                  "starting", "ago",   "from",      "and",      "streaming",
                                  "rabbitmq", "queue", "database",  "series"};

const std::vector<std::string> kUnitNames = {"seconds", "minutes", "hours", "days"};

std::optional<TimeUnit> parse_unit(std::string_view word) {
    const auto w = lower(word);
    if (w == "second" || w == "seconds") return TimeUnit::seconds;
    if (w == "minute" || w == "minutes") return TimeUnit::minutes;
    if (w == "hour" || w == "hours") return TimeUnit::hours;
    if (w == "day" || w == "days") return TimeUnit::days;
    return std::nullopt;
}

struct Token {
    enum class Type { word, integer, end };
    Type type = Type::end;
    std::string text;
    std::size_t offset = 0;
    std::size_t line = 1;
    std::size_t column = 1;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

std::vector<Token> lex(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t line = 1;
    std::size_t col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k, ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    while (i < text.size()) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        Token tok;
        tok.offset = i;
        tok.line = line;
        tok.column = col;
        std::size_t j = i;
        if (std::isdigit(static_cast<unsigned char>(c))) {
            while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
            tok.type = Token::Type::integer;
        } else if (ident_start(c)) {
            while (j < text.size() && ident_char(text[j])) ++j;
            tok.type = Token::Type::word;
        } else {
            throw ParseError(ParseError::Kind::lexical, line, col, i, std::string(1, c), {},
                             "unexpected character");
        }
        tok.text = std::string(text.substr(i, j - i));
        advance(j - i);
        tokens.push_back(std::move(tok));
    }
    Token end;
    end.offset = text.size();
    end.line = line;
    end.column = col;
    tokens.push_back(end);
    return tokens;
}

class Parser {
  public:
    explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

    QuerySpec parse() {
        QuerySpec spec;
        expect_keyword("every");
        spec.frequency.number = expect_quantity("frequency");
        spec.frequency.unit = expect_unit();
        check_duration(spec.frequency.number, spec.frequency.unit);

        expect_keyword("compute");
        expect_keyword("the");
        spec.aggregation = expect_function();
        accept_keyword("value");
        expect_keyword("of");
        accept_keyword("the");
        spec.attribute = expect_identifier("attribute name");

        if (accept_keyword("of")) {
            expect_keyword("the");
            expect_keyword("last");
            spec.window.kind = WindowKind::sliding;
            spec.window.number = expect_quantity("window length");
            spec.window.unit = expect_unit();
        } else if (accept_keyword("starting")) {
            spec.window.kind = WindowKind::landmark;
            spec.window.number = expect_quantity("window start");
            spec.window.unit = expect_unit();
            expect_keyword("ago");
        } else {
            fail_syntax({"of", "starting"});
        }
        check_duration(spec.window.number, spec.window.unit);

        // The source clause may be omitted; validation rejects a query with no source.
        if (peek().type == Token::Type::end) {
            return spec;
        }
        if (!accept_keyword("from")) {
            fail_syntax({"from", "end of query"});
        }
        if (accept_keyword("streaming")) {
            spec.sources.stream = parse_stream_tail();
        } else {
            SeriesRef ref;
            ref.provider = expect_identifier("provider name");
            expect_keyword("database");
            ref.database = expect_identifier("database name");
            expect_keyword("series");
            ref.series = expect_identifier("series name");
            spec.sources.historic = std::move(ref);
            if (accept_keyword("and")) {
                expect_keyword("streaming");
                spec.sources.stream = parse_stream_tail();
            }
        }
        if (peek().type != Token::Type::end) {
            fail_syntax({"end of query"});
        }
        return spec;
    }

  private:
    std::string parse_stream_tail() {
        expect_keyword("rabbitmq");
        expect_keyword("queue");
        return expect_identifier("queue name");
    }

    const Token& peek() const { return tokens_[pos_]; }

    bool is_keyword(const Token& t, std::string_view kw) const {
        return t.type == Token::Type::word && lower(t.text) == kw;
    }

    bool accept_keyword(std::string_view kw) {
        if (is_keyword(peek(), kw)) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect_keyword(std::string_view kw) {
        if (!accept_keyword(kw)) {
            fail_syntax({std::string(kw)});
        }
    }

    std::int64_t expect_quantity(std::string_view what) {
        const Token& t = peek();
        if (t.type != Token::Type::integer) {
            fail_syntax({std::string("integer ") + std::string(what)});
        }
        std::int64_t n = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), n);
        if (ec != std::errc{}) {
            fail_semantic(t, "integer out of range");
        }
        if (n < 1) {
            fail_semantic(t, std::string(what) + " must be at least 1");
        }
        ++pos_;
        return n;
    }

    TimeUnit expect_unit() {
        const Token& t = peek();
        if (t.type == Token::Type::word) {
            if (auto unit = parse_unit(t.text)) {
                ++pos_;
                return *unit;
            }
        }
        fail_syntax(kUnitNames);
    }

    AggregationFunction expect_function() {
        const Token& t = peek();
        if (t.type != Token::Type::word) {
            fail_syntax({"min", "max", "mean"});
        }
        auto fn = parse_function(t.text);
        if (!fn) {
            throw ParseError(ParseError::Kind::semantic, t.line, t.column, t.offset, t.text, {"min", "max", "mean"},
                             "unknown aggregation function");
        }
        ++pos_;
        return *fn;
    }

    std::string expect_identifier(std::string_view what) {
        const Token& t = peek();
        if (t.type != Token::Type::word || is_reserved_word(t.text)) {
            fail_syntax({std::string(what)});
        }
        ++pos_;
        return t.text;
    }

    void check_duration(std::int64_t n, TimeUnit unit) {
        try {
            (void) to_millis(n, unit);
        } catch (const RangeError& e) {
            const Token& t = tokens_[pos_ - 2];
            fail_semantic(t, e.what());
        }
    }

    [[noreturn]] void fail_syntax(std::vector<std::string> expected) const {
        const Token& t = peek();
        const std::string text = t.type == Token::Type::end ? "end of input" : t.text;
        throw ParseError(ParseError::Kind::syntax, t.line, t.column, t.offset, text, std::move(expected),
                         "unexpected token");
    }

    [[noreturn]] void fail_semantic(const Token& t, std::string detail) const {
        throw ParseError(ParseError::Kind::semantic, t.line, t.column, t.offset, t.text, {}, std::move(detail));
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

std::string describe(ParseError::Kind kind, std::size_t line, std::size_t column, const std::string& token,
                     const std::vector<std::string>& expected, const std::string& detail) {
    std::ostringstream os;
    os << "line " << line << ", column " << column << ": ";
    switch (kind) {
        case ParseError::Kind::lexical: os << "lexical error"; break;
        case ParseError::Kind::syntax: os << "syntax error"; break;
        case ParseError::Kind::semantic: os << "semantic error"; break;
    }
    os << " at '" << token << "': " << detail;
    if (!expected.empty()) {
        os << "; expected one of: ";
        for (std::size_t i = 0; i < expected.size(); ++i) {
            os << (i ? ", " : "") << expected[i];
        }
    }
    return os.str();
}

}// namespace

ParseError::ParseError(Kind kind, std::size_t line, std::size_t column, std::size_t offset, std::string token,
                       std::vector<std::string> expected, std::string detail)
    : Error(describe(kind, line, column, token, expected, detail)), kind_(kind), line_(line), column_(column),
      offset_(offset), token_(std::move(token)), expected_(std::move(expected)) {}

std::string_view function_name(AggregationFunction fn) {
    switch (fn) {
        case AggregationFunction::min: return "min";
        case AggregationFunction::max: return "max";
        case AggregationFunction::mean: return "mean";
    }
    return "mean";
}

std::optional<AggregationFunction> parse_function(std::string_view name) {
    const auto n = lower(name);
    if (n == "min") return AggregationFunction::min;
    if (n == "max") return AggregationFunction::max;
    if (n == "mean") return AggregationFunction::mean;
    return std::nullopt;
}

bool is_reserved_word(std::string_view word) {
    const auto w = lower(word);
    return std::find(kReserved.begin(), kReserved.end(), w) != kReserved.end();
}

QuerySpec parse_query(std::string_view text) { return Parser(lex(text)).parse(); }

std::string render_query(const QuerySpec& spec) {
    std::ostringstream os;
    os << "every " << spec.frequency.number << ' ' << unit_name(spec.frequency.unit) << " compute the "
       << function_name(spec.aggregation) << " value of " << spec.attribute << ' ';
    if (spec.window.kind == WindowKind::sliding) {
        os << "of the last " << spec.window.number << ' ' << unit_name(spec.window.unit);
    } else {
        os << "starting " << spec.window.number << ' ' << unit_name(spec.window.unit) << " ago";
    }
    if (spec.sources.historic || spec.sources.stream) {
        os << " from ";
    }
    if (spec.sources.historic) {
        const auto& h = *spec.sources.historic;
        os << h.provider << " database " << h.database << " series " << h.series;
        if (spec.sources.stream) {
            os << " and ";
        }
    }
    if (spec.sources.stream) {
        os << "streaming rabbitmq queue " << *spec.sources.stream;
    }
    return os.str();
}

std::vector<std::string> split_query_blocks(std::string_view text) {
    std::vector<std::string> blocks;
    std::string current;
    std::size_t start = 0;
    auto flush = [&] {
        if (current.find_first_not_of(" \t\r\n") != std::string::npos) {
            blocks.push_back(current);
        }
        current.clear();
    };
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            flush();
        } else {
            if (!current.empty()) {
                current.push_back('\n');
            }
            current.append(line);
        }
        if (nl == std::string_view::npos) {
            break;
        }
        start = nl + 1;
    }
    flush();
    return blocks;
}

std::vector<Diagnostic> validate(const QuerySpec& spec, const Catalog& catalog) {
    std::vector<Diagnostic> out;
    if (spec.attribute.empty()) {
        out.push_back({"empty attribute name"});
    }
    if (!spec.sources.historic && !spec.sources.stream) {
        out.push_back({"query names no source"});
    }
    if (spec.sources.historic) {
        const auto& ref = *spec.sources.historic;
        if (!catalog.providers.contains(ref.provider)) {
            out.push_back({"unknown historic provider: " + ref.provider});
        } else if (auto it = catalog.series.find(ref); it == catalog.series.end()) {
            out.push_back({"unknown historic series: " + ref.to_string()});
        } else if (!it->second.empty() && !it->second.contains(spec.attribute)) {
            out.push_back({"unknown attribute " + spec.attribute + " in series " + ref.to_string()});
        } else if (auto nn = catalog.non_numeric_series.find(ref);
                   nn != catalog.non_numeric_series.end() && nn->second.contains(spec.attribute)) {
            out.push_back({"attribute " + spec.attribute + " in series " + ref.to_string()
                           + " is not numeric and cannot be aggregated"});
        }
    }
    if (spec.sources.stream) {
        const auto& q = *spec.sources.stream;
        if (auto it = catalog.queues.find(q); it == catalog.queues.end()) {
            out.push_back({"unknown stream queue: " + q});
        } else if (!spec.sources.historic && !it->second.empty() && !it->second.contains(spec.attribute)) {
            out.push_back({"unknown attribute " + spec.attribute + " in stream queue " + q});
        } else if (auto nn = catalog.non_numeric_queues.find(q);
                   nn != catalog.non_numeric_queues.end() && nn->second.contains(spec.attribute)) {
            out.push_back({"attribute " + spec.attribute + " in stream queue " + q
                           + " is not numeric and cannot be aggregated"});
        }
    }
    if (!spec.sources.historic) {
        Millis reach = 0;
        try {
            reach = spec.window.duration();
        } catch (const RangeError&) {
            reach = INT64_MAX;
        }
        if (reach > catalog.live_retention) {
            out.push_back({"window reaches " + std::to_string(reach) + " ms before the query start but live retention is "
                           + std::to_string(catalog.live_retention) + " ms; a historic source is required"});
        }
    }
    return out;
}

}// namespace hstream
