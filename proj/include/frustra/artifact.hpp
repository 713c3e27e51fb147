#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include <json.hpp>

#include "frustra/error.hpp"
#include "frustra/features.hpp"
#include "frustra/models_sequence.hpp"
#include "frustra/models_tabular.hpp"
#include "frustra/text.hpp"

namespace frustra {

inline constexpr int artifact_version = 1;
inline constexpr std::string_view sequence_input_tag = "symbols-1to6-v1";

using AnyModel = std::variant<LogisticModel, ForestModel, BoostedModel, LstmModel>;

/// A trained model plus what is needed to check it is applied to compatible data.
struct ModelArtifact {
    AnyModel model;
    std::string config_hash = "none";
    std::string tool_version{frustra::tool_version};
    /// Feature ordering tag for tabular models, input tag for sequence models.
    std::string input_tag;
    std::vector<std::string> feature_names;
    nlohmann::json training_meta = nlohmann::json::object();

    std::string family() const {
        static const char* names[] = {"logreg", "rf", "gbdt", "lstm"};
        return names[model.index()];
    }
    bool is_sequence() const { return std::holds_alternative<LstmModel>(model); }

    TabularModel tabular() const {
        return std::visit(
            [](const auto& m) -> TabularModel {
                if constexpr (std::is_same_v<std::decay_t<decltype(m)>, LstmModel>) {
                    throw DomainError("artifact holds a sequence model, not a tabular one");
                } else {
                    return m;
                }
            },
            model);
    }
};

namespace detail {

inline nlohmann::json tree_to_json(const DecisionTree& t) {
    nlohmann::json j;
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value, gain, cover;
    for (const auto& n : t.nodes()) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
        gain.push_back(n.gain);
        cover.push_back(n.cover);
    }
    j["feature"] = feature;
    j["threshold"] = threshold;
    j["left"] = left;
    j["right"] = right;
    j["value"] = value;
    j["gain"] = gain;
    j["cover"] = cover;
    return j;
}

inline DecisionTree tree_from_json(const nlohmann::json& j, std::size_t n_features) {
    const auto feature = j.at("feature").get<std::vector<int>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto value = j.at("value").get<std::vector<double>>();
    const auto gain = j.at("gain").get<std::vector<double>>();
    const auto cover = j.at("cover").get<std::vector<double>>();
    const auto n = feature.size();
    if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n || gain.size() != n ||
        cover.size() != n) {
        throw DataError("tree arrays differ in length");
    }
    std::vector<TreeNode> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
        nodes[i] = TreeNode{feature[i], threshold[i], left[i], right[i], value[i], gain[i], cover[i]};
    }
    DecisionTree t(std::move(nodes));
    t.validate(n_features);
    return t;
}

}  // namespace detail

inline nlohmann::json to_json(const ModelArtifact& a) {
    nlohmann::json j;
    j["format"] = "frustra-model";
    j["version"] = artifact_version;
    j["family"] = a.family();
    j["tool_version"] = a.tool_version;
    j["config_hash"] = a.config_hash;
    j["input_tag"] = a.input_tag;
    j["feature_names"] = a.feature_names;
    j["training"] = a.training_meta;
    nlohmann::json& p = j["parameters"];
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, LogisticModel>) {
                p["weights"] = m.weights;
                p["bias"] = m.bias;
                p["l2"] = m.l2;
                p["iterations"] = m.iterations;
                p["final_loss"] = m.final_loss;
            } else if constexpr (std::is_same_v<M, ForestModel>) {
                p["n_features"] = m.n_features;
                p["features_per_split"] = m.features_per_split;
                p["seed"] = m.seed;
                p["trees"] = nlohmann::json::array();
                for (const auto& t : m.trees) p["trees"].push_back(detail::tree_to_json(t));
            } else if constexpr (std::is_same_v<M, BoostedModel>) {
                p["n_features"] = m.n_features;
                p["learning_rate"] = m.learning_rate;
                p["base_score"] = m.base_score;
                p["best_iteration"] = m.best_iteration;
                p["trees"] = nlohmann::json::array();
                for (const auto& t : m.trees) p["trees"].push_back(detail::tree_to_json(t));
            } else {
                p["embed_dim"] = m.embed_dim();
                p["hidden_dim"] = m.hidden_dim();
                p["vocab"] = lstm_vocab;
                p["values"] = std::vector<double>(m.params().data(), m.params().data() + m.params().size());
            }
        },
        a.model);
    return j;
}

inline ModelArtifact artifact_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "frustra-model") throw DataError("not a model artifact");
        if (j.at("version").get<int>() != artifact_version) {
            throw DataError("unsupported artifact version " + j.at("version").dump());
        }
        ModelArtifact a;
        a.tool_version = j.at("tool_version").get<std::string>();
        a.config_hash = j.at("config_hash").get<std::string>();
        a.input_tag = j.at("input_tag").get<std::string>();
        a.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        a.training_meta = j.value("training", nlohmann::json::object());
        const auto family = j.at("family").get<std::string>();
        const auto& p = j.at("parameters");
        if (family == "logreg") {
            LogisticModel m;
            m.weights = p.at("weights").get<std::vector<double>>();
            m.bias = p.at("bias").get<double>();
            m.l2 = p.at("l2").get<double>();
            m.iterations = p.at("iterations").get<std::size_t>();
            m.final_loss = p.at("final_loss").get<double>();
            a.model = std::move(m);
        } else if (family == "rf") {
            ForestModel m;
            m.n_features = p.at("n_features").get<std::size_t>();
            m.features_per_split = p.at("features_per_split").get<std::size_t>();
            m.seed = p.at("seed").get<std::uint64_t>();
            for (const auto& t : p.at("trees")) m.trees.push_back(detail::tree_from_json(t, m.n_features));
            if (m.trees.empty()) throw DataError("forest artifact has no trees");
            a.model = std::move(m);
        } else if (family == "gbdt") {
            BoostedModel m;
            m.n_features = p.at("n_features").get<std::size_t>();
            m.learning_rate = p.at("learning_rate").get<double>();
            m.base_score = p.at("base_score").get<double>();
            m.best_iteration = p.at("best_iteration").get<std::size_t>();
            for (const auto& t : p.at("trees")) m.trees.push_back(detail::tree_from_json(t, m.n_features));
            a.model = std::move(m);
        } else if (family == "lstm") {
            LstmModel m(p.at("embed_dim").get<std::size_t>(), p.at("hidden_dim").get<std::size_t>());
            const auto values = p.at("values").get<std::vector<double>>();
            if (values.size() != m.parameter_count()) throw DataError("LSTM parameter count mismatch");
            for (std::size_t i = 0; i < values.size(); ++i) m.params()[static_cast<Eigen::Index>(i)] = values[i];
            a.model = std::move(m);
        } else {
            throw DataError("unknown model family '" + family + "'");
        }
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model artifact: ") + e.what());
    }
}

inline void save_artifact(const std::filesystem::path& path, const ModelArtifact& a) {
    write_file(path, to_json(a).dump(1) + "\n");
}

inline ModelArtifact load_artifact(const std::filesystem::path& path) {
    const auto text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return artifact_from_json(j);
}

/// Refuses a feature matrix whose column order differs from the model's.
inline void check_matrix_compatible(const ModelArtifact& a, const FeatureMatrix& m) {
    if (a.is_sequence()) throw DomainError("sequence model cannot score a feature matrix");
    if (a.feature_names != m.columns()) {
        throw DataError("feature ordering of the data does not match the model (tag " + a.input_tag + ")");
    }
}

}  // namespace frustra
