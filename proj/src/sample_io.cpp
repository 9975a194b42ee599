#include <fstream>

#include "provenance_json.hpp"

namespace metsyn {

namespace detail {

using nlohmann::json;

json to_json(const Provenance &p) {
  json j = {{"donor_id", p.donor_id},
            {"host_id", p.host_id},
            {"seed", p.seed},
            {"ellipsoid",
             {{"center", p.ellipsoid.center}, {"semi_axes_vox", p.ellipsoid.semi_axes}}},
            {"transform", {{"angles_deg", p.transform.angles_deg}, {"scale", p.transform.scale}}},
            {"placement", p.placement},
            {"attempts",
             {{"crop", p.crop_attempts},
              {"transform", p.transform_attempts},
              {"placement", p.placement_attempts}}}};
  if (p.refinement) {
    const auto &r = *p.refinement;
    j["refinement"] = {{"lambda", r.lambda}, {"n_ddim", r.n_ddim}, {"T", r.T},
                       {"beta_1", r.beta_1}, {"beta_T", r.beta_T}, {"seed", r.seed}};
  }
  return j;
}

Provenance provenance_from_json(const json &j) {
  Provenance p;
  p.donor_id = j.at("donor_id").get<std::string>();
  p.host_id = j.at("host_id").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.ellipsoid.center = j.at("ellipsoid").at("center").get<Index3>();
  p.ellipsoid.semi_axes = j.at("ellipsoid").at("semi_axes_vox").get<std::array<double, 3>>();
  p.transform.angles_deg = j.at("transform").at("angles_deg").get<std::array<double, 3>>();
  p.transform.scale = j.at("transform").at("scale").get<double>();
  p.placement = j.at("placement").get<Index3>();
  const auto &a = j.at("attempts");
  p.crop_attempts = a.at("crop").get<int>();
  p.transform_attempts = a.at("transform").get<int>();
  p.placement_attempts = a.at("placement").get<int>();
  if (j.contains("refinement")) {
    const auto &r = j.at("refinement");
    p.refinement = RefinementRecord{r.at("lambda").get<int>(),    r.at("n_ddim").get<int>(),
                                    r.at("T").get<int>(),         r.at("beta_1").get<double>(),
                                    r.at("beta_T").get<double>(), r.at("seed").get<std::uint64_t>()};
  }
  return p;
}

json to_json(const YieldSummary &y) {
  return {{"attempted", y.attempted},
          {"produced", y.produced},
          {"dropped_extraction", y.dropped_extraction},
          {"dropped_crop", y.dropped_crop},
          {"dropped_transform", y.dropped_transform},
          {"dropped_placement", y.dropped_placement},
          {"dropped_undersized", y.dropped_undersized}};
}

} // namespace detail

void write_sample(const SyntheticSample &s, const std::filesystem::path &dir) {
  write_volume(s.image, dir / (s.id + "_img.vvol"));
  write_mask(s.label, dir / (s.id + "_lbl.vvol"));
  std::ofstream meta(dir / (s.id + "_meta.json"));
  if (!meta) throw InputError("cannot write " + (dir / (s.id + "_meta.json")).string());
  nlohmann::json j = detail::to_json(s.provenance);
  j["id"] = s.id;
  meta << j.dump(2) << '\n';
}

SyntheticSample read_sample(const std::filesystem::path &dir, const std::string &id) {
  SyntheticSample s;
  s.id = id;
  s.image = read_volume(dir / (id + "_img.vvol"));
  s.label = read_mask(dir / (id + "_lbl.vvol"));
  require_same_grid(s.image, s.label, "read_sample");
  const auto meta_path = dir / (id + "_meta.json");
  std::ifstream in(meta_path);
  if (!in) throw InputError("cannot open " + meta_path.string());
  try {
    s.provenance = detail::provenance_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception &e) {
    throw InputError(meta_path.string() + ": " + e.what());
  }
  return s;
}

} // namespace metsyn
