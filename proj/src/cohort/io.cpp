#include "mddlm/cohort/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace mddlm::cohort {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed for " + path);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string join_csv_line(const std::vector<std::string>& fields) {
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            out += '"';
            for (char c : f) {
                if (c == '"') out += '"';
                out += c;
            }
            out += '"';
        } else {
            out += f;
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) {
        if (cur.back() == '\r') cur.pop_back();
        lines.push_back(std::move(cur));
    }
    return lines;
}

}  // namespace

Cohort cohort_from_csv(const std::string& text, const Schema& schema, const LoadOptions& opts) {
    schema.validate();
    auto lines = split_lines(text);
    if (lines.empty()) throw DataError("empty table: no header row");

    auto header = split_csv_line(lines[0]);
    int id_col = -1, label_col = -1;
    std::vector<int> feature_of_col(header.size(), -1);
    for (size_t c = 0; c < header.size(); ++c) {
        const std::string& h = header[c];
        if (h == opts.id_column) {
            id_col = static_cast<int>(c);
        } else if (h == opts.label_column) {
            label_col = static_cast<int>(c);
        } else {
            const FeatureSpec* f = schema.find(h);
            if (!f) throw DataError("unknown column '" + h + "' not in schema " + schema.name);
            feature_of_col[c] = static_cast<int>(schema.index_of(h));
        }
    }
    if (id_col < 0) throw DataError("missing id column '" + opts.id_column + "'");

    Cohort cohort;
    cohort.schema = schema;
    cohort.provenance.kind = Provenance::Kind::Ingested;
    for (size_t row = 1; row < lines.size(); ++row) {
        if (lines[row].empty()) continue;
        auto cells = split_csv_line(lines[row]);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
        Record r;
        r.patient_id = cells[static_cast<size_t>(id_col)];
        if (r.patient_id.empty())
            throw DataError("row " + std::to_string(row) + ": empty patient_id");
        for (size_t c = 0; c < cells.size(); ++c) {
            int fi = feature_of_col[c];
            if (fi < 0) continue;
            const FeatureSpec& f = schema.features[static_cast<size_t>(fi)];
            const std::string& cell = cells[c];
            if (schema.is_missing_code(cell)) {
                r.set(f.name, Value::missing());
            } else if (f.is_numeric()) {
                double v;
                if (!parse_double(cell, v))
                    throw DataError("row " + std::to_string(row) + ": feature " + f.name +
                                    ": cannot parse '" + cell + "' as a number");
                r.set(f.name, Value::numeric(v, cell));
            } else {
                if (!f.find_category(cell))
                    throw DataError("row " + std::to_string(row) + ": feature " + f.name +
                                    ": value '" + cell + "' not in declared categories");
                r.set(f.name, Value::category(cell));
            }
        }
        if (label_col >= 0) {
            const std::string& cell = cells[static_cast<size_t>(label_col)];
            if (schema.is_missing_code(cell)) {
                r.label = Label::Unlabeled;
            } else if (cell == "1") {
                r.label = Label::MDD;
            } else if (cell == "0") {
                r.label = Label::HC;
            } else {
                throw DataError("row " + std::to_string(row) + ": label '" + cell +
                                "' not in {0,1,missing}");
            }
        }
        cohort.records.push_back(std::move(r));
    }
    cohort.validate();
    return cohort;
}

Cohort load_cohort(const std::string& path, const Schema& schema, const LoadOptions& opts) {
    return cohort_from_csv(read_file(path), schema, opts);
}

std::string cohort_to_csv(const Cohort& cohort, const LoadOptions& opts) {
    std::vector<std::string> header{opts.id_column};
    for (const auto& f : cohort.schema.features) header.push_back(f.name);
    header.push_back(opts.label_column);
    std::string out = join_csv_line(header);
    out += '\n';
    for (const auto& r : cohort.records) {
        std::vector<std::string> cells{r.patient_id};
        for (const auto& f : cohort.schema.features) {
            const Value& v = r.get(f.name);
            if (v.is_missing()) {
                cells.emplace_back("");
            } else if (v.kind == Value::Kind::Numeric) {
                cells.push_back(v.numeric_literal());
            } else {
                cells.push_back(v.text);
            }
        }
        switch (r.label) {
            case Label::MDD: cells.emplace_back("1"); break;
            case Label::HC: cells.emplace_back("0"); break;
            case Label::Unlabeled: cells.emplace_back(""); break;
        }
        out += join_csv_line(cells);
        out += '\n';
    }
    return out;
}

void save_cohort(const Cohort& cohort, const std::string& path, const LoadOptions& opts) {
    write_file(path, cohort_to_csv(cohort, opts));
}

// ---------------------------------------------------------------------------
// Schema config grammar
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_bar(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == '|') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

std::string join_bar(const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += '|';
        out += parts[i];
    }
    return out;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

// Values with significant leading/trailing whitespace are double-quoted.
std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        return s.substr(1, s.size() - 2);
    return s;
}

std::string quote_if_needed(const std::string& s) {
    if (!s.empty() && (s.front() == ' ' || s.back() == ' ' || s.front() == '"'))
        return "\"" + s + "\"";
    return s;
}

}  // namespace

Schema schema_from_config(const std::string& text) {
    Schema schema;
    schema.missing_codes = {""};
    std::vector<std::string> order;
    std::map<std::string, FeatureSpec> feats;
    auto feature_ref = [&](const std::string& fname) -> FeatureSpec& {
        auto it = feats.find(fname);
        if (it == feats.end()) {
            order.push_back(fname);
            FeatureSpec f;
            f.name = fname;
            it = feats.emplace(fname, std::move(f)).first;
        }
        return it->second;
    };
    auto category_ref = [&](FeatureSpec& f, const std::string& code) -> CategorySpec& {
        for (auto& c : f.categories)
            if (c.code == code) return c;
        f.categories.push_back({code, "", ""});
        return f.categories.back();
    };

    int line_no = 0;
    for (const auto& raw : split_lines(text)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("schema config line " + std::to_string(line_no) + ": missing '='");
        std::string key = trim(line.substr(0, eq));
        std::string value = unquote(trim(line.substr(eq + 1)));

        if (key == "schema.name") {
            schema.name = value;
        } else if (key == "schema.text_suffix") {
            schema.text_suffix = value;
        } else if (key == "schema.list_order") {
            schema.list_order = split_bar(value);
        } else if (key == "schema.missing_codes") {
            schema.missing_codes = split_bar(value);
        } else if (key.rfind("feature.", 0) == 0) {
            std::string rest = key.substr(8);
            size_t dot = rest.find('.');
            if (dot == std::string::npos)
                throw ConfigError("schema config line " + std::to_string(line_no) +
                                  ": malformed feature key");
            std::string fname = rest.substr(0, dot);
            std::string attr = rest.substr(dot + 1);
            FeatureSpec& f = feature_ref(fname);
            if (attr == "kind") {
                f.kind = feature_kind_from_string(value);
            } else if (attr == "unit") {
                f.unit = value;
            } else if (attr == "phrase") {
                f.phrase = value;
            } else if (attr == "list_label") {
                f.list_label = value;
            } else if (attr == "list_suffix") {
                f.list_suffix = value;
            } else if (attr == "text_sep") {
                f.text_sep = value;
            } else if (attr == "categories") {
                for (const auto& code : split_bar(value)) category_ref(f, code);
            } else if (attr.rfind("category.", 0) == 0) {
                std::string crest = attr.substr(9);
                size_t cdot = crest.rfind('.');
                if (cdot == std::string::npos)
                    throw ConfigError("schema config line " + std::to_string(line_no) +
                                      ": malformed category key");
                std::string code = crest.substr(0, cdot);
                std::string cattr = crest.substr(cdot + 1);
                CategorySpec& c = category_ref(f, code);
                if (cattr == "list") {
                    c.list_text = value;
                } else if (cattr == "text") {
                    c.text_fragment = value;
                } else {
                    throw ConfigError("schema config line " + std::to_string(line_no) +
                                      ": unknown category attribute " + cattr);
                }
            } else {
                throw ConfigError("schema config line " + std::to_string(line_no) +
                                  ": unknown feature attribute " + attr);
            }
        } else {
            throw ConfigError("schema config line " + std::to_string(line_no) +
                              ": unknown key " + key);
        }
    }
    for (const auto& fname : order) schema.features.push_back(feats.at(fname));
    schema.validate();
    return schema;
}

std::string schema_to_config(const Schema& schema) {
    std::ostringstream os;
    os << "schema.name = " << schema.name << "\n";
    if (!schema.text_suffix.empty()) os << "schema.text_suffix = " << schema.text_suffix << "\n";
    if (!schema.list_order.empty())
        os << "schema.list_order = " << join_bar(schema.list_order) << "\n";
    if (!(schema.missing_codes.size() == 1 && schema.missing_codes[0].empty()))
        os << "schema.missing_codes = " << join_bar(schema.missing_codes) << "\n";
    for (const auto& f : schema.features) {
        const std::string p = "feature." + f.name + ".";
        os << p << "kind = " << to_string(f.kind) << "\n";
        if (!f.unit.empty()) os << p << "unit = " << quote_if_needed(f.unit) << "\n";
        if (!f.phrase.empty()) os << p << "phrase = " << quote_if_needed(f.phrase) << "\n";
        if (!f.list_label.empty())
            os << p << "list_label = " << quote_if_needed(f.list_label) << "\n";
        if (!f.list_suffix.empty())
            os << p << "list_suffix = " << quote_if_needed(f.list_suffix) << "\n";
        if (!f.text_sep.empty()) os << p << "text_sep = " << quote_if_needed(f.text_sep) << "\n";
        if (!f.categories.empty()) {
            std::vector<std::string> codes;
            for (const auto& c : f.categories) codes.push_back(c.code);
            os << p << "categories = " << join_bar(codes) << "\n";
            for (const auto& c : f.categories) {
                if (!c.list_text.empty() && c.list_text != c.code)
                    os << p << "category." << c.code
                       << ".list = " << quote_if_needed(c.list_text) << "\n";
                if (!c.text_fragment.empty())
                    os << p << "category." << c.code
                       << ".text = " << quote_if_needed(c.text_fragment) << "\n";
            }
        }
    }
    return os.str();
}

Schema load_schema(const std::string& path) { return schema_from_config(read_file(path)); }

void save_schema(const Schema& schema, const std::string& path) {
    write_file(path, schema_to_config(schema));
}

}  // namespace mddlm::cohort
