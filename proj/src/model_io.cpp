#include "travag/model_io.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "travag/errors.hpp"

namespace travag {

namespace {
constexpr int kFormatVersion = 1;
}

void save_network(const Network& net, std::ostream& out) {
  nlohmann::json doc;
  doc["format_version"] = kFormatVersion;
  doc["seed"] = net.seed();
  auto& layers = doc["layers"] = nlohmann::json::array();
  auto& weights = doc["weights"] = nlohmann::json::array();
  auto& biases = doc["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const LayerSpec& spec = net.specs()[l];
    layers.push_back({{"in", spec.in_dim},
                      {"out", spec.out_dim},
                      {"activation", activation_name(spec.activation)}});
    // weights nested row-major: out rows of in values
    nlohmann::json rows = nlohmann::json::array();
    const std::span<const double> w = net.weights(l);
    for (std::size_t o = 0; o < spec.out_dim; ++o) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t i = 0; i < spec.in_dim; ++i) row.push_back(w[o * spec.in_dim + i]);
      rows.push_back(std::move(row));
    }
    weights.push_back(std::move(rows));
    biases.push_back(std::vector<double>(net.biases(l).begin(), net.biases(l).end()));
  }
  out << doc.dump(1) << '\n';
}

Network load_network(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON parse error: ") + e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != kFormatVersion) {
      throw FormatError("unsupported model format_version");
    }
    const std::uint64_t seed = doc.value("seed", std::uint64_t{0});
    std::vector<LayerSpec> specs;
    for (const auto& layer : doc.at("layers")) {
      specs.push_back(LayerSpec{layer.at("in").get<std::size_t>(),
                                layer.at("out").get<std::size_t>(),
                                activation_from_name(layer.at("activation").get<std::string>())});
    }
    std::vector<std::vector<double>> weights;
    for (std::size_t l = 0; l < specs.size(); ++l) {
      const auto& rows = doc.at("weights").at(l);
      std::vector<double> w;
      w.reserve(specs[l].in_dim * specs[l].out_dim);
      for (const auto& row : rows) {
        for (const auto& v : row) w.push_back(v.get<double>());
      }
      weights.push_back(std::move(w));
    }
    std::vector<std::vector<double>> biases;
    for (std::size_t l = 0; l < specs.size(); ++l) {
      biases.push_back(doc.at("biases").at(l).get<std::vector<double>>());
    }
    return Network::from_parameters(std::move(specs), std::move(weights), std::move(biases), seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON schema error: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model JSON invalid: ") + e.what());
  }
}

}  // namespace travag
