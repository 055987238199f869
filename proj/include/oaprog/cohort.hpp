#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "oaprog/common.hpp"
#include "oaprog/csv.hpp"

namespace oaprog {

enum class AttributeKind { categorical, ordinal, continuous };

/// Clinical meaning of special columns.  Role columns stay ordinary
/// attributes for modelling; the role tells the labeling and selection
/// stages where to find outcomes and inclusion-criteria inputs.
enum class AttributeRole {
    none,
    pain_left,
    pain_right,
    jsw_left,
    jsw_right,
    replacement,
    age,
    stiffness_minutes,
    knee_pain_left,
    knee_pain_right,
    crepitus_left,
    crepitus_right,
    osteophytes_left,
    osteophytes_right,
    kl_left,
    kl_right,
};

inline const char* kind_name(AttributeKind k) {
    switch (k) {
        case AttributeKind::categorical: return "categorical";
        case AttributeKind::ordinal: return "ordinal";
        case AttributeKind::continuous: return "continuous";
    }
    return "?";
}

inline std::optional<AttributeKind> parse_kind(std::string_view s) {
    if (s == "categorical") return AttributeKind::categorical;
    if (s == "ordinal") return AttributeKind::ordinal;
    if (s == "continuous") return AttributeKind::continuous;
    return std::nullopt;
}

inline const char* role_name(AttributeRole r) {
    switch (r) {
        case AttributeRole::none: return "none";
        case AttributeRole::pain_left: return "pain_left";
        case AttributeRole::pain_right: return "pain_right";
        case AttributeRole::jsw_left: return "jsw_left";
        case AttributeRole::jsw_right: return "jsw_right";
        case AttributeRole::replacement: return "replacement";
        case AttributeRole::age: return "age";
        case AttributeRole::stiffness_minutes: return "stiffness_minutes";
        case AttributeRole::knee_pain_left: return "knee_pain_left";
        case AttributeRole::knee_pain_right: return "knee_pain_right";
        case AttributeRole::crepitus_left: return "crepitus_left";
        case AttributeRole::crepitus_right: return "crepitus_right";
        case AttributeRole::osteophytes_left: return "osteophytes_left";
        case AttributeRole::osteophytes_right: return "osteophytes_right";
        case AttributeRole::kl_left: return "kl_left";
        case AttributeRole::kl_right: return "kl_right";
    }
    return "?";
}

inline std::optional<AttributeRole> parse_role(std::string_view s) {
    for (int i = 0; i <= static_cast<int>(AttributeRole::kl_right); ++i) {
        auto r = static_cast<AttributeRole>(i);
        if (s == role_name(r)) return r;
    }
    return std::nullopt;
}

struct AttributeMeta {
    std::string name;
    AttributeKind kind = AttributeKind::continuous;
    AttributeRole role = AttributeRole::none;
    bool kind_inferred = false;   // true when the <=10-distinct heuristic decided
    bool fill_forward = false;
    std::optional<Value> default_value;
    bool excluded = false;        // dates, IDs, barcodes: kept for audit, never trained on

    bool operator==(const AttributeMeta& o) const {
        return name == o.name && kind == o.kind && role == o.role &&
               fill_forward == o.fill_forward && default_value == o.default_value &&
               excluded == o.excluded;
    }
};

/// Rectangular longitudinal store: (patient, timepoint, attribute) -> Value.
/// Immutable once loaded; shareable across parallel readers.
class CohortTable {
public:
    CohortTable() = default;
    CohortTable(std::vector<std::string> patients, std::vector<int> timepoints,
                std::vector<AttributeMeta> attributes)
        : patients_(std::move(patients)),
          timepoints_(std::move(timepoints)),
          attributes_(std::move(attributes)),
          cells_(patients_.size() * timepoints_.size() * attributes_.size()) {
        for (std::size_t i = 1; i < timepoints_.size(); ++i)
            if (timepoints_[i] <= timepoints_[i - 1])
                throw DataError("timepoints must be strictly increasing");
        for (std::size_t i = 0; i < patients_.size(); ++i) patient_index_[patients_[i]] = i;
        for (std::size_t i = 0; i < attributes_.size(); ++i) attr_index_[attributes_[i].name] = i;
        const auto& check = [&](const AttributeMeta& a) {
            if (a.default_value && a.kind == AttributeKind::continuous)
                throw DataError("attribute '" + a.name + "': default values apply to categorical/ordinal only");
        };
        for (const auto& a : attributes_) check(a);
    }

    const std::vector<std::string>& patients() const { return patients_; }
    const std::vector<int>& timepoints() const { return timepoints_; }
    const std::vector<AttributeMeta>& attributes() const { return attributes_; }

    std::size_t n_patients() const { return patients_.size(); }
    std::size_t n_timepoints() const { return timepoints_.size(); }
    std::size_t n_attributes() const { return attributes_.size(); }

    std::size_t patient_index(const std::string& id) const {
        auto it = patient_index_.find(id);
        if (it == patient_index_.end()) throw DataError("unknown patient '" + id + "'");
        return it->second;
    }

    std::optional<std::size_t> find_attribute(const std::string& name) const {
        auto it = attr_index_.find(name);
        if (it == attr_index_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<std::size_t> find_role(AttributeRole role) const {
        for (std::size_t i = 0; i < attributes_.size(); ++i)
            if (attributes_[i].role == role) return i;
        return std::nullopt;
    }

    std::size_t timepoint_index(int year) const {
        auto it = std::find(timepoints_.begin(), timepoints_.end(), year);
        if (it == timepoints_.end()) throw DataError("unknown timepoint " + std::to_string(year));
        return static_cast<std::size_t>(it - timepoints_.begin());
    }

    const Value& cell(std::size_t patient, std::size_t timepoint, std::size_t attr) const {
        return cells_[offset(patient, timepoint, attr)];
    }

    void set_cell(std::size_t patient, std::size_t timepoint, std::size_t attr, Value v) {
        cells_[offset(patient, timepoint, attr)] = std::move(v);
    }

    /// A visit counts as attended when anything was observed at it.
    bool has_any_value(std::size_t patient, std::size_t timepoint) const {
        for (std::size_t a = 0; a < attributes_.size(); ++a)
            if (!is_missing(cell(patient, timepoint, a))) return true;
        return false;
    }

    bool operator==(const CohortTable& o) const {
        return patients_ == o.patients_ && timepoints_ == o.timepoints_ &&
               attributes_ == o.attributes_ && cells_ == o.cells_;
    }

private:
    std::size_t offset(std::size_t p, std::size_t t, std::size_t a) const {
        return (p * timepoints_.size() + t) * attributes_.size() + a;
    }

    std::vector<std::string> patients_;
    std::vector<int> timepoints_;
    std::vector<AttributeMeta> attributes_;
    std::vector<Value> cells_;
    std::unordered_map<std::string, std::size_t> patient_index_;
    std::unordered_map<std::string, std::size_t> attr_index_;
};

/// Start/end clinical measurements used by the class definition; values are
/// raw (never imputed) and may be missing.
struct PeriodOutcomes {
    std::optional<double> pain_start_left, pain_start_right;
    std::optional<double> pain_end_left, pain_end_right;
    std::optional<double> jsw_start_left, jsw_start_right;
    std::optional<double> jsw_end_left, jsw_end_right;
};

/// One observation window of a patient; the unit of classification.
/// Features are the start-of-period snapshot only.
struct PeriodRecord {
    std::size_t patient = 0;      // index into the source table
    std::string patient_id;
    int start_tp = 0;
    int end_tp = 0;
    double duration_years = 0.0;
    std::vector<Value> features;  // one entry per table attribute, values at start_tp
    PeriodOutcomes outcomes;
    bool after_replacement = false;
};

struct MetadataFile {
    std::string patient_column = "patient";
    std::string timepoint_column = "timepoint";
    std::vector<AttributeMeta> attributes;  // in file order
};

namespace detail {

struct MetaEntry {
    AttributeMeta meta;
    bool has_kind = false;
    std::string default_text;
    bool has_default = false;
};

}  // namespace detail

/// Parses the attribute metadata format: one [section] per attribute with
/// optional keys kind, role, fill_forward, default, excluded.  A [cohort]
/// section may rename the patient/timepoint columns.
inline MetadataFile parse_metadata(std::istream& in, const std::string& origin = "<metadata>") {
    MetadataFile out;
    std::vector<detail::MetaEntry> entries;
    detail::MetaEntry* current = nullptr;
    bool in_cohort_section = false;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw DataError(origin + ": line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        auto text = trim(line);
        if (text.empty() || text[0] == '#' || text[0] == ';') continue;
        if (text.front() == '[') {
            if (text.back() != ']') fail("unterminated section header");
            std::string name(trim(text.substr(1, text.size() - 2)));
            if (name.empty()) fail("empty section name");
            if (name == "cohort") {
                in_cohort_section = true;
                current = nullptr;
            } else {
                in_cohort_section = false;
                entries.emplace_back();
                current = &entries.back();
                current->meta.name = name;
            }
            continue;
        }
        auto eq = text.find('=');
        if (eq == std::string_view::npos) fail("expected key = value");
        std::string key(trim(text.substr(0, eq)));
        std::string value(trim(text.substr(eq + 1)));
        if (in_cohort_section) {
            if (key == "patient_column") out.patient_column = value;
            else if (key == "timepoint_column") out.timepoint_column = value;
            else fail("unknown cohort key '" + key + "'");
            continue;
        }
        if (!current) fail("key outside of any section");
        if (key == "kind") {
            auto k = parse_kind(value);
            if (!k) fail("unknown kind '" + value + "'");
            current->meta.kind = *k;
            current->has_kind = true;
        } else if (key == "role") {
            auto r = parse_role(value);
            if (!r) fail("unknown role '" + value + "'");
            current->meta.role = *r;
        } else if (key == "fill_forward") {
            auto b = parse_bool(value);
            if (!b) fail("fill_forward must be true/false");
            current->meta.fill_forward = *b;
        } else if (key == "excluded") {
            auto b = parse_bool(value);
            if (!b) fail("excluded must be true/false");
            current->meta.excluded = *b;
        } else if (key == "default") {
            current->default_text = value;
            current->has_default = true;
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    std::set<std::string> seen;
    for (auto& e : entries) {
        if (!seen.insert(e.meta.name).second)
            throw DataError(origin + ": duplicate attribute section '" + e.meta.name + "'");
        e.meta.kind_inferred = !e.has_kind;
        out.attributes.push_back(e.meta);
        if (e.has_default) {
            auto& meta = out.attributes.back();
            // value type resolved once the kind is known (after inference)
            meta.default_value = Value(e.default_text);
        }
    }
    return out;
}

inline MetadataFile parse_metadata_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return parse_metadata(in, path);
}

namespace detail {

/// The <=10-distinct-values heuristic: non-numeric columns and numeric
/// columns with few distinct values are categorical, the rest continuous.
/// Declared kinds always win over the heuristic.
inline AttributeKind infer_kind(const std::set<std::string>& distinct) {
    for (const auto& v : distinct)
        if (!parse_double(v)) return AttributeKind::categorical;
    return distinct.size() <= 10 ? AttributeKind::categorical : AttributeKind::continuous;
}

}  // namespace detail

/// Loads the cohort CSV against its metadata.  Every data column (other
/// than the patient/timepoint keys) must be described; kind mismatches are
/// reported with row/column coordinates; empty cells become the missing
/// marker.
inline CohortTable load_cohort(const CsvTable& data, const MetadataFile& metadata,
                               const std::string& origin = "<data>") {
    const auto& header = data.header;
    auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    auto patient_col = column_of(metadata.patient_column);
    if (!patient_col) throw DataError(origin + ": missing patient column '" + metadata.patient_column + "'");
    auto timepoint_col = column_of(metadata.timepoint_column);
    if (!timepoint_col) throw DataError(origin + ": missing timepoint column '" + metadata.timepoint_column + "'");

    std::map<std::string, std::size_t> meta_by_name;
    for (std::size_t i = 0; i < metadata.attributes.size(); ++i)
        meta_by_name[metadata.attributes[i].name] = i;

    // attribute order follows the data file
    std::vector<AttributeMeta> attrs;
    std::vector<std::size_t> attr_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == *patient_col || c == *timepoint_col) continue;
        auto it = meta_by_name.find(header[c]);
        if (it == meta_by_name.end())
            throw DataError(origin + ": unknown column '" + header[c] + "' (not described in metadata)");
        attrs.push_back(metadata.attributes[it->second]);
        attr_cols.push_back(c);
    }
    for (const auto& m : metadata.attributes)
        if (!column_of(m.name))
            throw DataError(origin + ": metadata attribute '" + m.name + "' not present in data");

    // resolve inferred kinds from the observed values
    for (std::size_t a = 0; a < attrs.size(); ++a) {
        if (!attrs[a].kind_inferred) continue;
        std::set<std::string> distinct;
        for (const auto& row : data.rows) {
            const auto& cell = row[attr_cols[a]];
            if (!trim(cell).empty()) distinct.insert(std::string(trim(cell)));
        }
        attrs[a].kind = detail::infer_kind(distinct);
    }
    // defaults were read as text; typed now that kinds are final
    for (auto& m : attrs) {
        if (!m.default_value) continue;
        const std::string text = as_text(*m.default_value);
        if (m.kind == AttributeKind::continuous)
            throw DataError(origin + ": attribute '" + m.name + "': default values apply to categorical/ordinal only");
        if (m.kind == AttributeKind::ordinal) {
            auto num = parse_double(text);
            if (!num) throw DataError(origin + ": attribute '" + m.name + "': ordinal default '" + text + "' is not numeric");
            m.default_value = Value(*num);
        }
    }

    std::vector<std::string> patients;
    std::unordered_map<std::string, std::size_t> patient_ix;
    std::set<int> timepoint_set;
    struct RawRow {
        std::size_t patient;
        int timepoint;
        std::size_t row;
    };
    std::vector<RawRow> raw;
    raw.reserve(data.rows.size());
    for (std::size_t r = 0; r < data.rows.size(); ++r) {
        const auto& row = data.rows[r];
        std::string pid(trim(row[*patient_col]));
        if (pid.empty()) throw DataError(origin + ": row " + std::to_string(r + 2) + ": empty patient id");
        auto [it, inserted] = patient_ix.try_emplace(pid, patients.size());
        if (inserted) patients.push_back(pid);
        auto tp_text = trim(row[*timepoint_col]);
        auto tp_num = parse_double(tp_text);
        if (!tp_num || *tp_num != static_cast<int>(*tp_num))
            throw DataError(origin + ": row " + std::to_string(r + 2) + ": timepoint '" +
                            std::string(tp_text) + "' is not an integer year");
        int tp = static_cast<int>(*tp_num);
        timepoint_set.insert(tp);
        raw.push_back({it->second, tp, r});
    }

    CohortTable table(std::move(patients), std::vector<int>(timepoint_set.begin(), timepoint_set.end()),
                      std::move(attrs));

    std::set<std::pair<std::size_t, int>> seen_visits;
    for (const auto& rr : raw) {
        if (!seen_visits.insert({rr.patient, rr.timepoint}).second)
            throw DataError(origin + ": duplicate row for patient '" + table.patients()[rr.patient] +
                            "' at timepoint " + std::to_string(rr.timepoint));
        std::size_t t = table.timepoint_index(rr.timepoint);
        const auto& row = data.rows[rr.row];
        for (std::size_t a = 0; a < table.n_attributes(); ++a) {
            const std::string cell(trim(row[attr_cols[a]]));
            if (cell.empty()) continue;  // stays missing
            const auto& meta = table.attributes()[a];
            if (meta.kind == AttributeKind::categorical) {
                table.set_cell(rr.patient, t, a, Value(cell));
            } else {
                auto num = parse_double(cell);
                if (!num)
                    throw DataError(origin + ": row " + std::to_string(rr.row + 2) + ", column '" +
                                    meta.name + "': value '" + cell + "' is not numeric for a " +
                                    kind_name(meta.kind) + " attribute");
                table.set_cell(rr.patient, t, a, Value(*num));
            }
        }
    }
    return table;
}

inline CohortTable load_cohort_files(const std::string& data_path, const std::string& metadata_path) {
    auto metadata = parse_metadata_file(metadata_path);
    auto data = read_csv_file(data_path);
    return load_cohort(data, metadata, data_path);
}

/// Writes the table back to the CSV format read by load_cohort.
inline void save_cohort_csv(std::ostream& out, const CohortTable& table,
                            const std::string& patient_column = "patient",
                            const std::string& timepoint_column = "timepoint") {
    std::vector<std::string> header{patient_column, timepoint_column};
    for (const auto& a : table.attributes()) header.push_back(a.name);
    write_csv_row(out, header);
    for (std::size_t p = 0; p < table.n_patients(); ++p) {
        for (std::size_t t = 0; t < table.n_timepoints(); ++t) {
            if (!table.has_any_value(p, t)) continue;
            std::vector<std::string> row{table.patients()[p], std::to_string(table.timepoints()[t])};
            for (std::size_t a = 0; a < table.n_attributes(); ++a)
                row.push_back(value_to_string(table.cell(p, t, a)));
            write_csv_row(out, row);
        }
    }
}

inline void save_metadata(std::ostream& out, const CohortTable& table,
                          const std::string& patient_column = "patient",
                          const std::string& timepoint_column = "timepoint") {
    out << "[cohort]\n";
    out << "patient_column = " << patient_column << "\n";
    out << "timepoint_column = " << timepoint_column << "\n";
    for (const auto& a : table.attributes()) {
        out << "\n[" << a.name << "]\n";
        out << "kind = " << kind_name(a.kind) << "\n";
        if (a.role != AttributeRole::none) out << "role = " << role_name(a.role) << "\n";
        if (a.fill_forward) out << "fill_forward = true\n";
        if (a.default_value) out << "default = " << value_to_string(*a.default_value) << "\n";
        if (a.excluded) out << "excluded = true\n";
    }
}

/// Carries the last observed value forward for fill_forward attributes and
/// fills what remains with the attribute default where one is declared.
/// Only visits the patient actually attended are touched: imputation must
/// not invent visits, or spurious observation windows would appear.
inline CohortTable apply_fill_forward(const CohortTable& input) {
    CohortTable table = input;
    for (std::size_t p = 0; p < table.n_patients(); ++p) {
        std::vector<bool> attended(table.n_timepoints());
        for (std::size_t t = 0; t < table.n_timepoints(); ++t)
            attended[t] = input.has_any_value(p, t);
        for (std::size_t a = 0; a < table.n_attributes(); ++a) {
            const auto& meta = table.attributes()[a];
            if (!meta.fill_forward && !meta.default_value) continue;
            Value last;
            for (std::size_t t = 0; t < table.n_timepoints(); ++t) {
                const Value& v = table.cell(p, t, a);
                if (!is_missing(v)) {
                    last = v;
                    continue;
                }
                if (!attended[t]) continue;
                if (meta.fill_forward && !is_missing(last))
                    table.set_cell(p, t, a, last);
                else if (meta.default_value)
                    table.set_cell(p, t, a, *meta.default_value);
            }
        }
    }
    return table;
}

/// Knee replacement events derived from the replacement role column: the
/// first timepoint at which the indicator is non-zero.
inline std::map<std::size_t, int> replacement_events(const CohortTable& table) {
    std::map<std::size_t, int> events;
    auto col = table.find_role(AttributeRole::replacement);
    if (!col) return events;
    for (std::size_t p = 0; p < table.n_patients(); ++p) {
        for (std::size_t t = 0; t < table.n_timepoints(); ++t) {
            const Value& v = table.cell(p, t, *col);
            if (is_missing(v)) continue;
            bool flagged = is_number(v) ? as_number(v) != 0.0
                                        : parse_bool(as_text(v)).value_or(false);
            if (flagged) {
                events.emplace(p, table.timepoints()[t]);
                break;
            }
        }
    }
    return events;
}

struct BuildPeriodsOptions {
    double min_duration_years = 2.0;
    /// Periods ending exactly at the replacement visit are dropped by
    /// default; measurements taken at that visit describe the prosthesis.
    bool keep_period_ending_at_replacement = false;
};

struct BuildPeriodsResult {
    std::vector<PeriodRecord> periods;
    std::size_t excluded_after_replacement = 0;
};

namespace detail {

inline std::optional<double> numeric_cell(const CohortTable& table, std::size_t p, std::size_t t,
                                          std::optional<std::size_t> attr) {
    if (!attr) return std::nullopt;
    const Value& v = table.cell(p, t, *attr);
    if (is_missing(v)) return std::nullopt;
    if (is_number(v)) return as_number(v);
    return parse_double(as_text(v));
}

}  // namespace detail

/// Expands each patient into all ordered timepoint pairs at least
/// min_duration_years apart, skipping unattended visits and anything at or
/// after a knee replacement.
inline BuildPeriodsResult build_periods(const CohortTable& table,
                                        const std::map<std::size_t, int>& replacements,
                                        const BuildPeriodsOptions& opts = {}) {
    BuildPeriodsResult result;
    auto pain_l = table.find_role(AttributeRole::pain_left);
    auto pain_r = table.find_role(AttributeRole::pain_right);
    auto jsw_l = table.find_role(AttributeRole::jsw_left);
    auto jsw_r = table.find_role(AttributeRole::jsw_right);

    for (std::size_t p = 0; p < table.n_patients(); ++p) {
        std::vector<std::size_t> usable;
        for (std::size_t t = 0; t < table.n_timepoints(); ++t)
            if (table.has_any_value(p, t)) usable.push_back(t);
        auto repl = replacements.find(p);
        for (std::size_t i = 0; i < usable.size(); ++i) {
            for (std::size_t j = i + 1; j < usable.size(); ++j) {
                int start = table.timepoints()[usable[i]];
                int end = table.timepoints()[usable[j]];
                if (end - start < opts.min_duration_years) continue;
                bool after = false;
                if (repl != replacements.end()) {
                    after = opts.keep_period_ending_at_replacement ? end > repl->second
                                                                   : end >= repl->second;
                }
                if (after) {
                    ++result.excluded_after_replacement;
                    continue;
                }
                PeriodRecord rec;
                rec.patient = p;
                rec.patient_id = table.patients()[p];
                rec.start_tp = start;
                rec.end_tp = end;
                rec.duration_years = static_cast<double>(end - start);
                rec.features.reserve(table.n_attributes());
                for (std::size_t a = 0; a < table.n_attributes(); ++a)
                    rec.features.push_back(table.cell(p, usable[i], a));
                rec.outcomes.pain_start_left = detail::numeric_cell(table, p, usable[i], pain_l);
                rec.outcomes.pain_start_right = detail::numeric_cell(table, p, usable[i], pain_r);
                rec.outcomes.pain_end_left = detail::numeric_cell(table, p, usable[j], pain_l);
                rec.outcomes.pain_end_right = detail::numeric_cell(table, p, usable[j], pain_r);
                rec.outcomes.jsw_start_left = detail::numeric_cell(table, p, usable[i], jsw_l);
                rec.outcomes.jsw_start_right = detail::numeric_cell(table, p, usable[i], jsw_r);
                rec.outcomes.jsw_end_left = detail::numeric_cell(table, p, usable[j], jsw_l);
                rec.outcomes.jsw_end_right = detail::numeric_cell(table, p, usable[j], jsw_r);
                rec.after_replacement = false;
                result.periods.push_back(std::move(rec));
            }
        }
    }
    return result;
}

}  // namespace oaprog
