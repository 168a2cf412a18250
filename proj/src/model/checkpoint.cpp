#include "advtrain/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace advtrain {

using nlohmann::json;

namespace {

json tensor_json(const Tensor& t) { return json{{"shape", t.shape()}, {"data", t.values()}}; }

Tensor tensor_from(const json& arrays, const std::string& name) {
    if (!arrays.contains(name)) throw std::runtime_error("checkpoint is missing array '" + name + "'");
    const json& entry = arrays.at(name);
    return Tensor(entry.at("shape").get<Shape>(), entry.at("data").get<std::vector<double>>());
}

}  // namespace

json checkpoint_to_json(const ModelParams& params) {
    params.validate();
    json arrays = json::object();
    const auto names = params.tensor_names();
    const auto tensors = params.tensors();
    for (std::size_t i = 0; i < names.size(); ++i) arrays[names[i]] = tensor_json(*tensors[i]);
    json activations = json::array();
    for (const DenseLayer& layer : params.encoder) activations.push_back(std::string(to_string(layer.activation)));
    return json{{"format", kCheckpointFormat},
                {"version", kCheckpointVersion},
                {"dropout_rate", params.dropout_rate},
                {"activations", activations},
                {"arrays", arrays}};
}

ModelParams checkpoint_from_json(const json& doc) {
    if (doc.value("format", std::string{}) != kCheckpointFormat) throw std::runtime_error("not a model checkpoint");
    const int version = doc.value("version", -1);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const json& arrays = doc.at("arrays");
    ModelParams p;
    p.embedding = tensor_from(arrays, "embedding");
    const auto activations = doc.at("activations").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < activations.size(); ++i) {
        const std::string prefix = "encoder." + std::to_string(i);
        p.encoder.push_back(DenseLayer{tensor_from(arrays, prefix + ".weight"), tensor_from(arrays, prefix + ".bias"),
                                       parse_activation(activations[i])});
    }
    p.head_rank = tensor_from(arrays, "head_rank.weight");
    p.head_pair_weight = tensor_from(arrays, "head_pair.weight");
    p.head_pair_bias = tensor_from(arrays, "head_pair.bias");
    p.dropout_rate = doc.at("dropout_rate").get<double>();
    p.validate();
    return p;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(params).dump() << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
    }
    return checkpoint_from_json(doc);
}

}  // namespace advtrain
