#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oaprog/eval.hpp"
#include "oaprog/forest.hpp"
#include "oaprog/preprocess.hpp"
#include "oaprog/strategies.hpp"

namespace oaprog {

using json = nlohmann::json;

inline constexpr int kArtifactVersion = 1;

/// FNV-1a over the canonical (sorted-key, shortest-double) serialization;
/// embedded in every artifact so reruns are attributable to their config.
inline std::string config_hash(const json& config) {
    std::string text = config.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

inline json forest_config_to_json(const ForestConfig& c) {
    return json{{"n_trees", c.n_trees},
                {"max_depth", c.max_depth},
                {"criterion", criterion_name(c.criterion)},
                {"min_samples_split", c.min_samples_split},
                {"features_per_split", c.features_per_split},
                {"bootstrap", c.bootstrap},
                {"seed", c.seed}};
}

inline ForestConfig forest_config_from_json(const json& j) {
    ForestConfig c;
    c.n_trees = j.at("n_trees").get<std::size_t>();
    c.max_depth = j.at("max_depth").get<std::size_t>();
    auto crit = parse_criterion(j.at("criterion").get<std::string>());
    if (!crit) throw ConfigError("unknown criterion in model artifact");
    c.criterion = *crit;
    c.min_samples_split = j.at("min_samples_split").get<std::size_t>();
    c.features_per_split = j.at("features_per_split").get<std::size_t>();
    c.bootstrap = j.at("bootstrap").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline json tree_to_json(const Tree& tree) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
        json node{{"feature", n.feature}, {"depth", n.depth}, {"cover", n.cover}};
        if (n.feature >= 0) {
            node["threshold"] = n.threshold;
            node["left"] = n.left;
            node["right"] = n.right;
        } else {
            node["counts"] = n.counts;
        }
        nodes.push_back(std::move(node));
    }
    return nodes;
}

inline Tree tree_from_json(const json& j) {
    Tree tree;
    for (const auto& node : j) {
        TreeNode n;
        n.feature = node.at("feature").get<int>();
        n.depth = node.at("depth").get<int>();
        n.cover = node.at("cover").get<double>();
        if (n.feature >= 0) {
            n.threshold = node.at("threshold").get<double>();
            n.left = node.at("left").get<int>();
            n.right = node.at("right").get<int>();
        } else {
            n.counts = node.at("counts").get<std::vector<double>>();
        }
        tree.nodes.push_back(std::move(n));
    }
    return tree;
}

inline json forest_to_json(const RandomForestModel& model) {
    json trees = json::array();
    for (const auto& t : model.trees()) trees.push_back(tree_to_json(t));
    return json{{"version", kArtifactVersion},
                {"config", forest_config_to_json(model.config())},
                {"n_features", model.n_features()},
                {"classes_per_output", model.classes_per_output()},
                {"trees", std::move(trees)}};
}

inline RandomForestModel forest_from_json(const json& j) {
    if (j.at("version").get<int>() != kArtifactVersion)
        throw ConfigError("unsupported model artifact version");
    std::vector<Tree> trees;
    for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t));
    return RandomForestModel(forest_config_from_json(j.at("config")),
                             j.at("n_features").get<std::size_t>(),
                             j.at("classes_per_output").get<std::vector<std::size_t>>(),
                             std::move(trees));
}

inline json strategy_to_json(const StrategyModel& model) {
    json forests = json::array();
    for (const auto& f : model.forests) forests.push_back(forest_to_json(f));
    json j{{"version", kArtifactVersion},
           {"strategy", strategy_name(model.kind)},
           {"forests", std::move(forests)}};
    if (model.kind == StrategyKind::duo || model.kind == StrategyKind::multilabel) {
        // the bit pair -> class bijection, recorded for auditability
        j["label_map"] = json{{"00", "N"}, {"10", "P"}, {"01", "S"}, {"11", "PS"}};
    }
    return j;
}

inline StrategyModel strategy_from_json(const json& j) {
    if (j.at("version").get<int>() != kArtifactVersion)
        throw ConfigError("unsupported model artifact version");
    StrategyModel model;
    auto kind = parse_strategy(j.at("strategy").get<std::string>());
    if (!kind) throw ConfigError("unknown strategy in model artifact");
    model.kind = *kind;
    for (const auto& f : j.at("forests")) model.forests.push_back(forest_from_json(f));
    return model;
}

inline json transform_to_json(const FittedTransform& t) {
    json columns = json::array();
    for (const auto& col : t.columns) {
        json c{{"attribute", col.attr}, {"name", col.name}, {"one_hot", col.one_hot}};
        if (!col.categories.empty()) {
            c["categories"] = col.categories;
            c["impute"] = col.category_impute;
        } else {
            c["impute"] = col.numeric_impute;
        }
        columns.push_back(std::move(c));
    }
    json j{{"version", kArtifactVersion},
           {"columns", std::move(columns)},
           {"feature_names", t.feature_names},
           {"dropped_all_missing", t.dropped_all_missing},
           {"scaling", t.scaling}};
    if (t.scaling) {
        j["col_min"] = t.col_min;
        j["col_max"] = t.col_max;
    }
    return j;
}

inline json store_to_json(const PredictionStore& store) {
    json entries = json::array();
    for (const auto& e : store.entries)
        entries.push_back(json::array({e.pred, e.p_pain, e.p_structure}));
    return json{{"version", kArtifactVersion},
                {"n_configs", store.n_configs},
                {"n_repeats", store.n_repeats},
                {"n_seeds", store.n_seeds},
                {"n_instances", store.n_instances},
                {"truth", store.truth},
                {"fold_of", store.fold_of},
                {"fold_redraws", store.fold_redraws},
                {"entries", std::move(entries)}};
}

inline PredictionStore store_from_json(const json& j) {
    if (j.at("version").get<int>() != kArtifactVersion)
        throw ConfigError("unsupported prediction store version");
    PredictionStore store;
    store.init(j.at("n_configs").get<std::size_t>(), j.at("n_repeats").get<std::size_t>(),
               j.at("n_seeds").get<std::size_t>(), j.at("n_instances").get<std::size_t>());
    store.truth = j.at("truth").get<std::vector<int>>();
    store.fold_of = j.at("fold_of").get<std::vector<std::vector<int>>>();
    store.fold_redraws = j.at("fold_redraws").get<std::size_t>();
    const auto& entries = j.at("entries");
    if (entries.size() != store.entries.size())
        throw ConfigError("prediction store entry count mismatch");
    for (std::size_t i = 0; i < store.entries.size(); ++i) {
        store.entries[i].pred = entries[i][0].get<int>();
        store.entries[i].p_pain = entries[i][1].get<double>();
        store.entries[i].p_structure = entries[i][2].get<double>();
    }
    return store;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    return json::parse(in);
}

}  // namespace oaprog
