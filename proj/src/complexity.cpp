#include "litformer/complexity.hpp"

#include <iomanip>

#include "json.hpp"

namespace lit {

std::string report_table(const ComplexityReport& rep) {
  std::ostringstream os;
  os << "model: " << rep.model_name << "  input " << shape_str(rep.input_shape) << "\n";
  os << "  params " << std::fixed << std::setprecision(3)
     << static_cast<double>(rep.total_params) / 1e6 << " M ("
     << rep.total_bias_params << " biases)  conv+attention MACs "
     << static_cast<double>(rep.total_macs) / 1e9 << " G\n";
  if (rep.uncounted_macs > 0)
    os << "  other ops (softmax, pooling, interpolation, elementwise): "
       << static_cast<double>(rep.uncounted_macs) / 1e9 << " G\n";
  for (const auto& note : rep.notes) os << "  note: " << note << "\n";
  for (const auto& c : rep.checks) {
    os << "  [" << (c.pass ? "PASS" : "FAIL") << "] " << c.id << ": predicted "
       << std::setprecision(6) << c.predicted << ", measured " << c.measured;
    if (c.rel_tolerance > 0) os << " (tol " << std::setprecision(0) << c.rel_tolerance * 100 << "%)";
    else os << " (exact)";
    if (!c.detail.empty()) os << " | " << c.detail;
    os << "\n";
  }
  return os.str();
}

std::string report_json(const ComplexityReport& rep) {
  nlohmann::json j;
  j["model"] = rep.model_name;
  j["input_shape"] = rep.input_shape;
  j["total_params"] = rep.total_params;
  j["total_bias_params"] = rep.total_bias_params;
  j["total_macs"] = rep.total_macs;
  j["uncounted_macs"] = rep.uncounted_macs;
  j["notes"] = rep.notes;
  j["layers"] = nlohmann::json::array();
  for (const auto& e : rep.layers) {
    j["layers"].push_back({{"path", e.path},
                           {"weight_params", e.weight_params},
                           {"bias_params", e.bias_params},
                           {"macs", e.macs},
                           {"params_3d_equiv", e.params_3d_equiv},
                           {"macs_3d_equiv", e.macs_3d_equiv}});
  }
  j["checks"] = nlohmann::json::array();
  for (const auto& c : rep.checks) {
    j["checks"].push_back({{"id", c.id},
                           {"predicted", c.predicted},
                           {"measured", c.measured},
                           {"rel_tolerance", c.rel_tolerance},
                           {"pass", c.pass},
                           {"detail", c.detail}});
  }
  return j.dump(2);
}

}  // namespace lit
