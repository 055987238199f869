#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oaprog/cohort.hpp"
#include "oaprog/common.hpp"
#include "oaprog/labeling.hpp"

namespace oaprog {

/// Modelling view of the labeled windows: raw (possibly missing) feature
/// values per row plus the audit columns needed downstream.
struct Dataset {
    std::vector<AttributeMeta> attrs;
    std::vector<std::vector<Value>> rows;     // rows[i][a] aligned with attrs
    std::vector<ProgressionClass> labels;
    std::vector<std::size_t> patient;         // patient index per row
    std::vector<std::string> patient_ids;
    std::vector<int> start_tp, end_tp;
    std::vector<double> duration_years;

    std::size_t size() const { return rows.size(); }

    std::array<std::size_t, kNumClasses> class_counts() const {
        std::array<std::size_t, kNumClasses> counts{};
        for (auto c : labels) ++counts[static_cast<std::size_t>(c)];
        return counts;
    }
};

inline Dataset assemble_dataset(const CohortTable& table, const std::vector<LabeledPeriod>& labeled) {
    Dataset ds;
    ds.attrs = table.attributes();
    ds.rows.reserve(labeled.size());
    for (const auto& lp : labeled) {
        ds.rows.push_back(lp.period.features);
        ds.labels.push_back(lp.label);
        ds.patient.push_back(lp.period.patient);
        ds.patient_ids.push_back(lp.period.patient_id);
        ds.start_tp.push_back(lp.period.start_tp);
        ds.end_tp.push_back(lp.period.end_tp);
        ds.duration_years.push_back(lp.period.duration_years);
    }
    return ds;
}

struct PreprocessPlan {
    double attr_missing_threshold = 0.50;
    double row_missing_threshold = 0.40;
    bool scaling = false;  // min-max to [0,1]; only scale-sensitive models want this

    void validate() const {
        if (attr_missing_threshold < 0 || attr_missing_threshold > 1 ||
            row_missing_threshold < 0 || row_missing_threshold > 1)
            throw ConfigError("missingness thresholds must lie in [0,1]");
    }
};

enum class DropReason { too_many_missing, constant, excluded_flag };

inline const char* drop_reason_name(DropReason r) {
    switch (r) {
        case DropReason::too_many_missing: return "too_many_missing";
        case DropReason::constant: return "constant";
        case DropReason::excluded_flag: return "excluded_flag";
    }
    return "?";
}

struct FilterReport {
    std::vector<std::pair<std::string, DropReason>> dropped_attrs;
    std::size_t dropped_rows = 0;
};

/// Dataset-preparation filters, applied once globally in this order:
/// sparse attributes, then sparse rows (measured over surviving
/// attributes), then single-valued attributes, then audit-only columns.
inline Dataset filter_dataset(const Dataset& input, const PreprocessPlan& plan,
                              FilterReport* report = nullptr) {
    plan.validate();
    const std::size_t n = input.rows.size();
    std::vector<bool> attr_keep(input.attrs.size(), true);
    FilterReport local;

    for (std::size_t a = 0; a < input.attrs.size(); ++a) {
        std::size_t missing = 0;
        for (const auto& row : input.rows) missing += is_missing(row[a]) ? 1 : 0;
        if (n > 0 && static_cast<double>(missing) / n > plan.attr_missing_threshold) {
            attr_keep[a] = false;
            local.dropped_attrs.push_back({input.attrs[a].name, DropReason::too_many_missing});
        }
    }

    std::size_t kept_attr_count = 0;
    for (bool k : attr_keep) kept_attr_count += k ? 1 : 0;
    std::vector<bool> row_keep(n, true);
    if (kept_attr_count > 0) {
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t missing = 0;
            for (std::size_t a = 0; a < input.attrs.size(); ++a)
                if (attr_keep[a] && is_missing(input.rows[r][a])) ++missing;
            if (static_cast<double>(missing) / kept_attr_count > plan.row_missing_threshold) {
                row_keep[r] = false;
                ++local.dropped_rows;
            }
        }
    }

    for (std::size_t a = 0; a < input.attrs.size(); ++a) {
        if (!attr_keep[a]) continue;
        std::set<std::string> distinct;
        for (std::size_t r = 0; r < n; ++r) {
            if (!row_keep[r]) continue;
            const Value& v = input.rows[r][a];
            if (!is_missing(v)) distinct.insert(value_to_string(v));
        }
        if (distinct.size() <= 1) {
            attr_keep[a] = false;
            local.dropped_attrs.push_back({input.attrs[a].name, DropReason::constant});
        }
    }

    for (std::size_t a = 0; a < input.attrs.size(); ++a) {
        if (attr_keep[a] && input.attrs[a].excluded) {
            attr_keep[a] = false;
            local.dropped_attrs.push_back({input.attrs[a].name, DropReason::excluded_flag});
        }
    }

    Dataset out;
    for (std::size_t a = 0; a < input.attrs.size(); ++a)
        if (attr_keep[a]) out.attrs.push_back(input.attrs[a]);
    if (out.attrs.empty()) throw DataError("empty feature space: every attribute was filtered out");
    for (std::size_t r = 0; r < n; ++r) {
        if (!row_keep[r]) continue;
        std::vector<Value> row;
        row.reserve(out.attrs.size());
        for (std::size_t a = 0; a < input.attrs.size(); ++a)
            if (attr_keep[a]) row.push_back(input.rows[r][a]);
        out.rows.push_back(std::move(row));
        out.labels.push_back(input.labels[r]);
        out.patient.push_back(input.patient[r]);
        out.patient_ids.push_back(input.patient_ids[r]);
        out.start_tp.push_back(input.start_tp[r]);
        out.end_tp.push_back(input.end_tp[r]);
        out.duration_years.push_back(input.duration_years[r]);
    }
    if (report) *report = std::move(local);
    return out;
}

namespace detail {

/// Canonical order for categories: numeric when every value parses as a
/// number, lexicographic otherwise.  Used for mode ties and code order.
inline bool all_numeric(const std::set<std::string>& values) {
    for (const auto& v : values)
        if (!parse_double(v)) return false;
    return !values.empty();
}

inline std::vector<std::string> canonical_categories(const std::set<std::string>& values) {
    std::vector<std::string> out(values.begin(), values.end());
    if (all_numeric(values))
        std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
            double da = *parse_double(a), db = *parse_double(b);
            if (da != db) return da < db;
            return a < b;
        });
    return out;  // set iteration is already lexicographic
}

inline std::string categorical_text(const Value& v) {
    return is_text(v) ? as_text(v) : value_to_string(v);
}

}  // namespace detail

/// Per-attribute encoding fitted on training rows only.
struct FittedColumn {
    std::size_t attr = 0;            // index into Dataset::attrs
    std::string name;
    bool one_hot = false;
    std::vector<std::string> categories;  // canonical order; empty for plain numeric
    double numeric_impute = 0.0;          // mean (continuous) or mode (ordinal)
    std::string category_impute;          // mode for categorical columns
};

/// Leak-free feature encoder: imputation values, category dictionaries and
/// scaling ranges all come from the training fold alone.
struct FittedTransform {
    std::vector<FittedColumn> columns;
    std::vector<std::string> dropped_all_missing;  // attributes unusable in this fold
    bool scaling = false;
    std::vector<double> col_min, col_max;  // per output column, when scaling
    std::vector<std::string> feature_names;  // one per output column
    std::size_t width = 0;

    bool operator==(const FittedTransform& o) const {
        if (columns.size() != o.columns.size() || scaling != o.scaling || width != o.width ||
            col_min != o.col_min || col_max != o.col_max ||
            feature_names != o.feature_names || dropped_all_missing != o.dropped_all_missing)
            return false;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            const auto& a = columns[i];
            const auto& b = o.columns[i];
            if (a.attr != b.attr || a.name != b.name || a.one_hot != b.one_hot ||
                a.categories != b.categories || a.numeric_impute != b.numeric_impute ||
                a.category_impute != b.category_impute)
                return false;
        }
        return true;
    }
};

inline std::vector<double> apply_transform(const FittedTransform& t, const std::vector<Value>& row);

/// Fits imputation, encoding and (optionally) scaling from the given
/// training rows.  Categorical columns with more than two training values
/// become one-hot blocks; two or fewer become a single 0/1 code column.
inline FittedTransform fit_transform(const Dataset& ds, const std::vector<std::size_t>& train_rows,
                                     const PreprocessPlan& plan) {
    plan.validate();
    if (train_rows.empty()) throw DataError("cannot fit a transform on an empty training fold");
    FittedTransform t;
    t.scaling = plan.scaling;

    for (std::size_t a = 0; a < ds.attrs.size(); ++a) {
        const auto& meta = ds.attrs[a];
        FittedColumn col;
        col.attr = a;
        col.name = meta.name;

        if (meta.kind == AttributeKind::categorical) {
            std::map<std::string, std::size_t> freq;
            for (auto r : train_rows) {
                const Value& v = ds.rows[r][a];
                if (!is_missing(v)) ++freq[detail::categorical_text(v)];
            }
            if (freq.empty()) {
                if (meta.default_value) {
                    freq[detail::categorical_text(*meta.default_value)] = 1;
                } else {
                    t.dropped_all_missing.push_back(meta.name);
                    continue;
                }
            }
            std::set<std::string> distinct;
            for (const auto& [k, _] : freq) distinct.insert(k);
            col.categories = detail::canonical_categories(distinct);
            std::size_t best = 0;
            for (const auto& c : col.categories) best = std::max(best, freq[c]);
            for (const auto& c : col.categories)
                if (freq[c] == best) { col.category_impute = c; break; }  // canonical-first tie rule
            col.one_hot = col.categories.size() > 2;
        } else {
            std::vector<double> seen;
            for (auto r : train_rows) {
                const Value& v = ds.rows[r][a];
                if (!is_missing(v)) seen.push_back(as_number(v));
            }
            if (seen.empty()) {
                if (meta.default_value && is_number(*meta.default_value)) {
                    seen.push_back(as_number(*meta.default_value));
                } else {
                    t.dropped_all_missing.push_back(meta.name);
                    continue;
                }
            }
            if (meta.kind == AttributeKind::continuous) {
                double sum = 0;
                for (double v : seen) sum += v;
                col.numeric_impute = sum / seen.size();
            } else {
                // ordinal: mode, ties to the smallest value
                std::map<double, std::size_t> freq;
                for (double v : seen) ++freq[v];
                std::size_t best = 0;
                for (const auto& [_, n] : freq) best = std::max(best, n);
                for (const auto& [v, n] : freq)
                    if (n == best) { col.numeric_impute = v; break; }
            }
        }

        if (col.one_hot) {
            for (const auto& c : col.categories) t.feature_names.push_back(col.name + "=" + c);
        } else {
            t.feature_names.push_back(col.name);
        }
        t.columns.push_back(std::move(col));
    }
    t.width = t.feature_names.size();
    if (t.width == 0) throw DataError("empty feature space: no attribute usable in the training fold");

    if (t.scaling) {
        t.col_min.assign(t.width, 0.0);
        t.col_max.assign(t.width, 0.0);
        bool first = true;
        FittedTransform unscaled = t;
        unscaled.scaling = false;
        for (auto r : train_rows) {
            auto vec = apply_transform(unscaled, ds.rows[r]);
            for (std::size_t c = 0; c < t.width; ++c) {
                if (first || vec[c] < t.col_min[c]) t.col_min[c] = vec[c];
                if (first || vec[c] > t.col_max[c]) t.col_max[c] = vec[c];
            }
            first = false;
        }
    }
    return t;
}

/// Encodes one raw row as a fixed-width numeric vector with no gaps.
/// Unseen categories produce an all-zero one-hot block; in two-value code
/// columns they fall back to the training mode.
inline std::vector<double> apply_transform(const FittedTransform& t, const std::vector<Value>& row) {
    std::vector<double> out;
    out.reserve(t.width);
    for (const auto& col : t.columns) {
        const Value& v = row[col.attr];
        if (!col.categories.empty()) {
            std::string text = is_missing(v) ? col.category_impute : detail::categorical_text(v);
            auto it = std::find(col.categories.begin(), col.categories.end(), text);
            if (col.one_hot) {
                for (std::size_t i = 0; i < col.categories.size(); ++i)
                    out.push_back(it != col.categories.end() &&
                                          i == static_cast<std::size_t>(it - col.categories.begin())
                                      ? 1.0
                                      : 0.0);
            } else {
                std::size_t code;
                if (it == col.categories.end())
                    code = static_cast<std::size_t>(
                        std::find(col.categories.begin(), col.categories.end(), col.category_impute) -
                        col.categories.begin());
                else
                    code = static_cast<std::size_t>(it - col.categories.begin());
                out.push_back(static_cast<double>(code));
            }
        } else {
            out.push_back(is_missing(v) ? col.numeric_impute : as_number(v));
        }
    }
    if (t.scaling) {
        for (std::size_t c = 0; c < out.size(); ++c) {
            double lo = t.col_min[c], hi = t.col_max[c];
            double x = hi > lo ? (out[c] - lo) / (hi - lo) : 0.0;
            out[c] = std::clamp(x, 0.0, 1.0);
        }
    }
    return out;
}

inline std::vector<std::vector<double>> apply_transform_rows(const FittedTransform& t,
                                                             const Dataset& ds,
                                                             const std::vector<std::size_t>& rows) {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(apply_transform(t, ds.rows[r]));
    return out;
}

}  // namespace oaprog
