// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/pdf_text.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <set>
#include <variant>

#include <spdlog/spdlog.h>

#include "drug_insights/errors.hpp"
#include "text_util.hpp"

namespace drug_insights {
namespace {

struct Obj;
using Array = std::vector<Obj>;
using Dict = std::map<std::string, Obj, std::less<>>;

struct Name {
    std::string value;
};
struct Keyword {
    std::string value;
};
struct Ref {
    int num = 0;
    int gen = 0;
};

struct Obj {
    std::variant<std::monostate, bool, double, Name, std::string, std::shared_ptr<Array>,
                 std::shared_ptr<Dict>, Ref, Keyword>
        v;

    const double* number() const { return std::get_if<double>(&v); }
    const std::string* string() const { return std::get_if<std::string>(&v); }
    const Name* name() const { return std::get_if<Name>(&v); }
    const Ref* ref() const { return std::get_if<Ref>(&v); }
    const Keyword* keyword() const { return std::get_if<Keyword>(&v); }
    const Array* array() const {
        auto p = std::get_if<std::shared_ptr<Array>>(&v);
        return p ? p->get() : nullptr;
    }
    const Dict* dict() const {
        auto p = std::get_if<std::shared_ptr<Dict>>(&v);
        return p ? p->get() : nullptr;
    }
};

const Obj* lookup(const Dict& d, std::string_view key) {
    auto it = d.find(key);
    return it == d.end() ? nullptr : &it->second;
}

bool is_delim(char c) {
    return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' ||
           c == '}' || c == '/' || c == '%';
}

bool is_ws(char c) { return detail::is_space(c) || c == '\0'; }

/// Tokenizer/parser shared by object bodies and content streams.
class Lexer {
public:
    explicit Lexer(std::string_view s, std::size_t pos = 0) : s_(s), pos_(pos) {}

    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) { pos_ = p; }
    bool at_end() {
        skip_ws();
        return pos_ >= s_.size();
    }

    void skip_ws() {
        while (pos_ < s_.size()) {
            if (is_ws(s_[pos_])) {
                ++pos_;
            } else if (s_[pos_] == '%') {
                while (pos_ < s_.size() && s_[pos_] != '\n' && s_[pos_] != '\r') ++pos_;
            } else {
                break;
            }
        }
    }

    /// Parses one object; `resolve_refs` turns "N G R" into a Ref.
    Obj parse(bool resolve_refs = true, int depth = 0) {
        if (depth > 64) throw Error("PDF object nesting too deep");
        skip_ws();
        if (pos_ >= s_.size()) return Obj{Keyword{""}};
        char c = s_[pos_];
        if (c == '/') return Obj{Name{read_name()}};
        if (c == '(') return Obj{read_literal_string()};
        if (c == '<') {
            if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '<') {
                pos_ += 2;
                auto dict = std::make_shared<Dict>();
                for (;;) {
                    skip_ws();
                    if (pos_ >= s_.size()) break;
                    if (s_.compare(pos_, 2, ">>") == 0) {
                        pos_ += 2;
                        break;
                    }
                    if (s_[pos_] != '/') {
                        // Malformed entry; skip a token to make progress.
                        parse(resolve_refs, depth + 1);
                        continue;
                    }
                    std::string key = read_name();
                    (*dict)[key] = parse(resolve_refs, depth + 1);
                }
                return Obj{dict};
            }
            return Obj{read_hex_string()};
        }
        if (c == '[') {
            ++pos_;
            auto arr = std::make_shared<Array>();
            for (;;) {
                skip_ws();
                if (pos_ >= s_.size()) break;
                if (s_[pos_] == ']') {
                    ++pos_;
                    break;
                }
                arr->push_back(parse(resolve_refs, depth + 1));
            }
            return Obj{arr};
        }
        if (c == ']' || c == '>' || c == ')' || c == '{' || c == '}') {
            ++pos_;
            return Obj{Keyword{std::string(1, c)}};
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
            std::size_t start = pos_;
            double value = read_number();
            if (resolve_refs && is_integer_token(start)) {
                std::size_t save = pos_;
                skip_ws();
                std::size_t gen_start = pos_;
                if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                    double gen = read_number();
                    if (is_integer_token(gen_start)) {
                        skip_ws();
                        if (pos_ < s_.size() && s_[pos_] == 'R' &&
                            (pos_ + 1 >= s_.size() || is_ws(s_[pos_ + 1]) || is_delim(s_[pos_ + 1]))) {
                            ++pos_;
                            return Obj{Ref{static_cast<int>(value), static_cast<int>(gen)}};
                        }
                    }
                }
                pos_ = save;
            }
            return Obj{value};
        }
        std::string word = read_word();
        if (word == "true") return Obj{true};
        if (word == "false") return Obj{false};
        if (word == "null") return Obj{};
        return Obj{Keyword{word}};
    }

private:
    bool is_integer_token(std::size_t start) const {
        for (std::size_t i = start; i < pos_; ++i) {
            if (!std::isdigit(static_cast<unsigned char>(s_[i]))) return false;
        }
        return pos_ > start;
    }

    double read_number() {
        std::size_t start = pos_;
        if (s_[pos_] == '-' || s_[pos_] == '+') ++pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
            ++pos_;
        std::string tok(s_.substr(start, pos_ - start));
        return std::strtod(tok.c_str(), nullptr);
    }

    std::string read_word() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && !is_ws(s_[pos_]) && !is_delim(s_[pos_])) ++pos_;
        if (pos_ == start) ++pos_;
        return std::string(s_.substr(start, pos_ - start));
    }

    std::string read_name() {
        ++pos_;  // '/'
        std::string out;
        while (pos_ < s_.size() && !is_ws(s_[pos_]) && !is_delim(s_[pos_])) {
            if (s_[pos_] == '#' && pos_ + 2 < s_.size()) {
                out.push_back(static_cast<char>(std::strtol(std::string(s_.substr(pos_ + 1, 2)).c_str(), nullptr, 16)));
                pos_ += 3;
            } else {
                out.push_back(s_[pos_++]);
            }
        }
        return out;
    }

    std::string read_literal_string() {
        ++pos_;  // '('
        std::string out;
        int depth = 1;
        while (pos_ < s_.size()) {
            char c = s_[pos_++];
            if (c == '\\' && pos_ < s_.size()) {
                char e = s_[pos_++];
                switch (e) {
                    case 'n': out.push_back('\n'); break;
                    case 'r': out.push_back('\r'); break;
                    case 't': out.push_back('\t'); break;
                    case 'b': out.push_back('\b'); break;
                    case 'f': out.push_back('\f'); break;
                    case '\r':
                        if (pos_ < s_.size() && s_[pos_] == '\n') ++pos_;
                        break;
                    case '\n': break;
                    default:
                        if (e >= '0' && e <= '7') {
                            int v = e - '0';
                            for (int k = 0; k < 2 && pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '7'; ++k)
                                v = v * 8 + (s_[pos_++] - '0');
                            out.push_back(static_cast<char>(v & 0xFF));
                        } else {
                            out.push_back(e);
                        }
                }
            } else if (c == '(') {
                ++depth;
                out.push_back(c);
            } else if (c == ')') {
                if (--depth == 0) break;
                out.push_back(c);
            } else {
                out.push_back(c);
            }
        }
        return out;
    }

    std::string read_hex_string() {
        ++pos_;  // '<'
        std::string digits;
        while (pos_ < s_.size() && s_[pos_] != '>') {
            if (std::isxdigit(static_cast<unsigned char>(s_[pos_]))) digits.push_back(s_[pos_]);
            ++pos_;
        }
        ++pos_;
        if (digits.size() % 2) digits.push_back('0');
        std::string out;
        for (std::size_t i = 0; i < digits.size(); i += 2)
            out.push_back(static_cast<char>(std::strtol(digits.substr(i, 2).c_str(), nullptr, 16)));
        return out;
    }

    std::string_view s_;
    std::size_t pos_;
};

std::string inflate_bytes(std::string_view data) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw Error("zlib init failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    std::string out;
    char buf[16384];
    int rc = Z_OK;
    do {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        out.append(buf, sizeof buf - zs.avail_out);
    } while (rc == Z_OK);
    inflateEnd(&zs);
    // Truncated streams are common; keep whatever was recovered.
    if (rc != Z_STREAM_END && out.empty()) throw Error("FlateDecode stream could not be inflated");
    return out;
}

std::string latin1_to_utf8(std::string_view bytes) {
    std::string out;
    for (unsigned char c : bytes) detail::append_utf8(out, c);
    return out;
}

std::string decode_text_string(std::string_view bytes) {
    if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFE &&
        static_cast<unsigned char>(bytes[1]) == 0xFF) {
        std::string out;
        for (std::size_t i = 2; i + 1 < bytes.size(); i += 2) {
            char32_t unit = (static_cast<unsigned char>(bytes[i]) << 8) | static_cast<unsigned char>(bytes[i + 1]);
            if (unit >= 0xD800 && unit <= 0xDBFF && i + 3 < bytes.size()) {
                char32_t low = (static_cast<unsigned char>(bytes[i + 2]) << 8) |
                               static_cast<unsigned char>(bytes[i + 3]);
                unit = 0x10000 + ((unit - 0xD800) << 10) + (low - 0xDC00);
                i += 2;
            }
            detail::append_utf8(out, unit);
        }
        return out;
    }
    return latin1_to_utf8(bytes);
}

struct StoredObject {
    Obj value;
    std::optional<std::string> stream;  // decoded stream data
};

class Document {
public:
    explicit Document(std::string_view bytes) : bytes_(bytes) {
        scan_objects();
        unpack_object_streams();
    }

    const Obj* get(int num) const {
        auto it = objects_.find(num);
        return it == objects_.end() ? nullptr : &it->second.value;
    }

    const Obj& resolve(const Obj& o, int depth = 0) const {
        static const Obj null_obj{};
        if (auto r = o.ref()) {
            if (depth > 32) return null_obj;
            auto target = get(r->num);
            return target ? resolve(*target, depth + 1) : null_obj;
        }
        return o;
    }

    const std::string* stream_of(const Obj& o) const {
        if (auto r = o.ref()) {
            auto it = objects_.find(r->num);
            if (it != objects_.end() && it->second.stream) return &*it->second.stream;
        }
        return nullptr;
    }

    std::vector<const Dict*> pages() const {
        std::vector<const Dict*> out;
        for (const auto& [num, stored] : objects_) {
            auto d = stored.value.dict();
            if (d && type_of(*d) == "Catalog") {
                if (auto root = lookup(*d, "Pages")) {
                    std::set<const Dict*> seen;
                    walk_pages(resolve(*root), out, seen, 0);
                }
                if (!out.empty()) return out;
            }
        }
        // No usable page tree: fall back to every /Page in object order.
        for (const auto& [num, stored] : objects_) {
            auto d = stored.value.dict();
            if (d && type_of(*d) == "Page") out.push_back(d);
        }
        return out;
    }

    std::optional<Dict> info() const {
        // Trailer dictionaries and cross-reference stream dictionaries both carry /Info.
        std::optional<Dict> found;
        for (std::size_t at = bytes_.find("trailer"); at != std::string_view::npos;
             at = bytes_.find("trailer", at + 7)) {
            Lexer lex(bytes_, at + 7);
            auto t = lex.parse();
            if (auto d = t.dict()) {
                if (auto i = lookup(*d, "Info"); i && resolve(*i).dict()) found = *resolve(*i).dict();
            }
        }
        if (found) return found;
        for (const auto& [num, stored] : objects_) {
            auto d = stored.value.dict();
            if (d && type_of(*d) == "XRef") {
                if (auto i = lookup(*d, "Info"); i && resolve(*i).dict()) found = *resolve(*i).dict();
            }
        }
        return found;
    }

    static std::string type_of(const Dict& d) {
        auto t = lookup(d, "Type");
        return t && t->name() ? t->name()->value : std::string();
    }

private:
    void walk_pages(const Obj& node, std::vector<const Dict*>& out, std::set<const Dict*>& seen,
                    int depth) const {
        auto d = node.dict();
        if (!d || depth > 64 || !seen.insert(d).second) return;
        if (type_of(*d) == "Page") {
            out.push_back(d);
            return;
        }
        if (auto kids = lookup(*d, "Kids")) {
            if (auto arr = resolve(*kids).array()) {
                for (const auto& kid : *arr) walk_pages(resolve(kid), out, seen, depth + 1);
            }
        }
    }

    void scan_objects() {
        for (std::size_t at = bytes_.find("obj"); at != std::string_view::npos; at = bytes_.find("obj", at + 3)) {
            // Expect "<num> <gen> obj" with a delimiter after "obj".
            if (at + 3 < bytes_.size() && !is_ws(bytes_[at + 3]) && !is_delim(bytes_[at + 3])) continue;
            std::size_t p = at;
            auto back_int = [&](std::size_t& pos) -> std::optional<int> {
                while (pos > 0 && is_ws(bytes_[pos - 1])) --pos;
                std::size_t end = pos;
                while (pos > 0 && std::isdigit(static_cast<unsigned char>(bytes_[pos - 1]))) --pos;
                if (pos == end) return std::nullopt;
                return std::atoi(std::string(bytes_.substr(pos, end - pos)).c_str());
            };
            if (p == 0 || !is_ws(bytes_[p - 1])) continue;
            auto gen = back_int(p);
            if (!gen || p == 0 || !is_ws(bytes_[p - 1])) continue;
            auto num = back_int(p);
            if (!num) continue;
            try {
                Lexer lex(bytes_, at + 3);
                StoredObject stored;
                stored.value = lex.parse();
                lex.skip_ws();
                std::size_t after = lex.pos();
                if (stored.value.dict() && bytes_.compare(after, 6, "stream") == 0) {
                    std::size_t data = after + 6;
                    if (data < bytes_.size() && bytes_[data] == '\r') ++data;
                    if (data < bytes_.size() && bytes_[data] == '\n') ++data;
                    stored.stream = read_stream(*stored.value.dict(), data);
                }
                objects_[*num] = std::move(stored);
            } catch (const std::exception& e) {
                spdlog::debug("skipping unparseable PDF object {}: {}", *num, e.what());
            }
        }
    }

    std::string read_stream(const Dict& dict, std::size_t data) {
        std::size_t length = std::string_view::npos;
        if (auto len = lookup(dict, "Length")) {
            if (auto n = len->number()) {
                length = static_cast<std::size_t>(*n);
            } else if (auto r = len->ref()) {
                // Indirect lengths usually follow the stream; look it up by scanning.
                auto key = std::to_string(r->num) + " " + std::to_string(r->gen) + " obj";
                auto at = bytes_.find(key, data);
                if (at != std::string_view::npos) {
                    Lexer lex(bytes_, at + key.size());
                    if (auto v = lex.parse().number()) length = static_cast<std::size_t>(*v);
                }
            }
        }
        if (length == std::string_view::npos || data + length > bytes_.size() ||
            bytes_.substr(data + length, 32).find("endstream") == std::string_view::npos) {
            auto end = bytes_.find("endstream", data);
            length = (end == std::string_view::npos ? bytes_.size() : end) - data;
            while (length > 0 && (bytes_[data + length - 1] == '\n' || bytes_[data + length - 1] == '\r'))
                --length;
        }
        std::string_view raw = bytes_.substr(data, length);

        std::vector<std::string> filters;
        if (auto f = lookup(dict, "Filter")) {
            if (auto n = f->name()) filters.push_back(n->value);
            if (auto arr = f->array())
                for (const auto& x : *arr)
                    if (auto n = x.name()) filters.push_back(n->value);
        }
        std::string out(raw);
        for (const auto& f : filters) {
            if (f == "FlateDecode" || f == "Fl") {
                out = inflate_bytes(out);
            } else {
                spdlog::warn("PDF stream filter /{} is not supported; stream skipped", f);
                return {};
            }
        }
        return out;
    }

    void unpack_object_streams() {
        std::vector<std::pair<int, StoredObject>> extracted;
        for (const auto& [num, stored] : objects_) {
            auto d = stored.value.dict();
            if (!d || type_of(*d) != "ObjStm" || !stored.stream) continue;
            auto n = lookup(*d, "N");
            auto first = lookup(*d, "First");
            if (!n || !first || !n->number() || !first->number()) continue;
            const std::string& data = *stored.stream;
            Lexer header(data);
            std::vector<std::pair<int, std::size_t>> entries;
            for (int i = 0; i < static_cast<int>(*n->number()); ++i) {
                auto obj_num = header.parse(false).number();
                auto offset = header.parse(false).number();
                if (!obj_num || !offset) break;
                entries.emplace_back(static_cast<int>(*obj_num), static_cast<std::size_t>(*offset));
            }
            for (auto [obj_num, offset] : entries) {
                std::size_t at = static_cast<std::size_t>(*first->number()) + offset;
                if (at >= data.size()) continue;
                Lexer lex(data, at);
                StoredObject s;
                s.value = lex.parse();
                extracted.emplace_back(obj_num, std::move(s));
            }
        }
        for (auto& [num, s] : extracted) objects_.try_emplace(num, std::move(s));
    }

    std::string_view bytes_;
    std::map<int, StoredObject> objects_;
};

/// Turns one page's content stream into text lines and paragraphs.
class TextCollector {
public:
    void run(std::string_view content) {
        Lexer lex(content);
        std::vector<Obj> operands;
        while (!lex.at_end()) {
            Obj tok = lex.parse(false);
            auto kw = tok.keyword();
            if (!kw) {
                operands.push_back(std::move(tok));
                continue;
            }
            const std::string& op = kw->value;
            if (op == "BI") {
                skip_inline_image(lex, content);
            } else {
                apply(op, operands);
            }
            operands.clear();
        }
    }

    std::string text() const { return out_; }

private:
    static double num(const std::vector<Obj>& ops, std::size_t from_end) {
        if (ops.size() < from_end) return 0.0;
        auto n = ops[ops.size() - from_end].number();
        return n ? *n : 0.0;
    }

    void apply(const std::string& op, const std::vector<Obj>& ops) {
        if (op == "BT") {
            line_y_ = 0.0;
            scale_ = 1.0;
        } else if (op == "Tf") {
            font_size_ = std::abs(num(ops, 1));
        } else if (op == "TL") {
            leading_ = num(ops, 1);
        } else if (op == "Td" || op == "TD") {
            double tx = num(ops, 2);
            double ty = num(ops, 1);
            if (op == "TD") leading_ = -ty;
            line_y_ += ty * scale_;
            if (ty == 0.0 && tx > 0.0) pending_space_ = true;
        } else if (op == "T*") {
            line_y_ -= line_height();
        } else if (op == "Tm") {
            scale_ = std::abs(num(ops, 3)) > 0 ? std::abs(num(ops, 3)) : 1.0;
            line_y_ = num(ops, 1);
        } else if (op == "Tj") {
            if (!ops.empty() && ops.back().string()) show(*ops.back().string());
        } else if (op == "'") {
            line_y_ -= line_height();
            if (!ops.empty() && ops.back().string()) show(*ops.back().string());
        } else if (op == "\"") {
            line_y_ -= line_height();
            if (!ops.empty() && ops.back().string()) show(*ops.back().string());
        } else if (op == "TJ") {
            if (ops.empty() || !ops.back().array()) return;
            for (const auto& part : *ops.back().array()) {
                if (auto s = part.string()) {
                    show(*s);
                } else if (auto n = part.number(); n && *n < -200.0) {
                    pending_space_ = true;
                }
            }
        }
    }

    double line_height() const {
        double base = leading_ > 0 ? leading_ : (font_size_ > 0 ? font_size_ : 12.0);
        return base * scale_;
    }

    void show(const std::string& bytes) {
        if (bytes.empty()) return;
        if (last_y_) {
            double dy = std::abs(*last_y_ - line_y_);
            if (dy > 1.5 * line_height()) {
                out_ += "\n\n";
                pending_space_ = false;
            } else if (dy > 0.01) {
                out_ += "\n";
                pending_space_ = false;
            }
        }
        if (pending_space_ && !out_.empty() && out_.back() != ' ' && out_.back() != '\n' && bytes.front() != ' ')
            out_.push_back(' ');
        pending_space_ = false;
        out_ += latin1_to_utf8(bytes);
        last_y_ = line_y_;
    }

    static void skip_inline_image(Lexer& lex, std::string_view content) {
        std::size_t at = lex.pos();
        for (;;) {
            at = content.find("EI", at);
            if (at == std::string_view::npos) {
                lex.seek(content.size());
                return;
            }
            bool before = at > 0 && is_ws(content[at - 1]);
            bool after = at + 2 >= content.size() || is_ws(content[at + 2]);
            if (before && after) {
                lex.seek(at + 2);
                return;
            }
            at += 2;
        }
    }

    std::string out_;
    double line_y_ = 0.0;
    std::optional<double> last_y_;
    double scale_ = 1.0;
    double font_size_ = 0.0;
    double leading_ = 0.0;
    bool pending_space_ = false;
};

}  // namespace

PdfContent BasicPdfTextExtractor::extract(std::string_view pdf_bytes) const {
    if (pdf_bytes.substr(0, 1024).find("%PDF-") == std::string_view::npos)
        throw UnreadableSource("not a PDF file (missing %PDF- header)");
    if (pdf_bytes.find("/Encrypt") != std::string_view::npos)
        throw UnreadableSource("encrypted PDFs are not supported");
    Document doc(pdf_bytes);

    PdfContent content;
    for (const Dict* page : doc.pages()) {
        std::string data;
        if (auto contents = lookup(*page, "Contents")) {
            if (auto s = doc.stream_of(*contents)) {
                data = *s;
            } else if (auto arr = doc.resolve(*contents).array()) {
                for (const auto& part : *arr) {
                    if (auto s = doc.stream_of(part)) {
                        data += *s;
                        data += '\n';
                    }
                }
            }
        }
        TextCollector collector;
        collector.run(data);
        content.pages.push_back(collector.text());
    }

    if (auto info = doc.info()) {
        for (auto [key, field] : {std::pair{"Title", &content.title}, std::pair{"Author", &content.author}}) {
            if (auto v = lookup(*info, key)) {
                if (auto s = doc.resolve(*v).string()) {
                    auto text = decode_text_string(*s);
                    if (!detail::trim(text).empty()) *field = std::string(detail::trim(text));
                }
            }
        }
    }
    return content;
}

}  // namespace drug_insights
