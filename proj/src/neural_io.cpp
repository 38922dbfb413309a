#include <json.hpp>

#include "nidda/neural.hpp"

namespace nidda::nn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

Activation activation_from_string(std::string_view s) {
  for (auto a : {Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Softmax}) {
    if (to_string(a) == s) return a;
  }
  throw ParseError("unknown activation '" + std::string(s) + "'", 0);
}

std::string to_checkpoint_json(const DenseNetd& net) {
  nlohmann::ordered_json j;
  j["format"] = "nidda-densenet";
  j["version"] = 1;
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : net.layers()) {
    nlohmann::ordered_json lj;
    lj["in"] = l.in_dim();
    lj["out"] = l.out_dim();
    lj["activation"] = std::string(to_string(l.activation));
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    lj["weights"] = std::move(w);
    lj["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back(std::move(lj));
  }
  return j.dump();
}

DenseNetd from_checkpoint_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
  if (j.value("format", "") != "nidda-densenet" || j.value("version", 0) != 1) {
    throw ParseError("checkpoint: unsupported format or version", 0);
  }
  std::vector<DenseLayer<double>> layers;
  for (const auto& lj : j.at("layers")) {
    const auto in = lj.at("in").get<Eigen::Index>();
    const auto out = lj.at("out").get<Eigen::Index>();
    const auto w = lj.at("weights").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (in < 1 || out < 1 || static_cast<Eigen::Index>(w.size()) != in * out ||
        static_cast<Eigen::Index>(b.size()) != out) {
      throw ParseError("checkpoint: layer shape does not match its parameter count", 0);
    }
    DenseLayer<double> l;
    l.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), out, in);
    l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
    l.activation = activation_from_string(lj.at("activation").get<std::string>());
    layers.push_back(std::move(l));
  }
  return DenseNetd::from_layers(std::move(layers));
}

}  // namespace nidda::nn
