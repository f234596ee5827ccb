#include <fstream>

#include <nlohmann/json.hpp>

#include "sslab/error.hpp"
#include "sslab/models.hpp"

namespace fs = std::filesystem;

namespace sslab {
namespace {

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  fs::path p = stem;
  p += suffix;
  return p;
}

const std::string kStatePrefix = "state.";

}  // namespace

void to_json(nlohmann::json& j, const CheckpointManifest& m) {
  j = nlohmann::json{{"backbone", m.backbone},
                     {"pretext", std::string(to_string(m.pretext))},
                     {"out_dim", m.out_dim},
                     {"id_embedding_dim", m.id_embedding_dim},
                     {"jigsaw_projection", m.jigsaw_projection},
                     {"epoch", m.epoch},
                     {"seed", m.seed},
                     {"states", m.states},
                     {"notes", m.notes}};
}

void from_json(const nlohmann::json& j, CheckpointManifest& m) {
  m.backbone = j.at("backbone").get<BackboneConfig>();
  m.pretext = pretext_kind_from_string(j.at("pretext").get<std::string>());
  m.out_dim = j.at("out_dim").get<int>();
  m.id_embedding_dim = j.value("id_embedding_dim", 128);
  m.jigsaw_projection = j.value("jigsaw_projection", kJigsawProjection);
  m.epoch = j.at("epoch").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.states = j.value("states", std::vector<std::string>{});
  m.notes = j.value("notes", std::string{});
}

void save_checkpoint(const fs::path& stem, PretextModel& model, CheckpointManifest manifest) {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  torch::serialize::OutputArchive archive;
  model->save(archive);
  manifest.states.clear();
  for (const auto& [name, tensor] : model->states()) {
    archive.write(kStatePrefix + name, tensor, /*is_buffer=*/true);
    manifest.states.push_back(name);
  }
  try {
    archive.save_to(with_suffix(stem, ".pt").string());
  } catch (const c10::Error& e) {
    throw RuntimeFailure("cannot write checkpoint " + stem.string() + ": " + e.what_without_backtrace());
  }
  std::ofstream out(with_suffix(stem, ".json"));
  out << nlohmann::json(manifest).dump(2) << '\n';
  if (!out) throw RuntimeFailure("cannot write checkpoint manifest " + stem.string());
}

CheckpointManifest load_manifest(const fs::path& stem) {
  std::ifstream in(with_suffix(stem, ".json"));
  if (!in) throw MissingDependency("missing checkpoint manifest " + with_suffix(stem, ".json").string());
  try {
    return nlohmann::json::parse(in).get<CheckpointManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed checkpoint manifest " + stem.string() + ": " + e.what());
  }
}

PretextModel load_checkpoint(const fs::path& stem) {
  const auto manifest = load_manifest(stem);
  const auto blob = with_suffix(stem, ".pt");
  if (!fs::exists(blob)) throw MissingDependency("missing checkpoint tensors " + blob.string());
  PretextModel model(manifest.pretext, manifest.backbone, manifest.out_dim, manifest.id_embedding_dim,
                     manifest.jigsaw_projection);
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(blob.string());
    model->load(archive);
    for (const auto& name : manifest.states) {
      torch::Tensor t;
      archive.read(kStatePrefix + name, t, /*is_buffer=*/true);
      model->set_state(name, t);
    }
  } catch (const c10::Error& e) {
    throw RuntimeFailure("cannot read checkpoint " + blob.string() + ": " + e.what_without_backtrace());
  }
  model->eval();
  return model;
}

}  // namespace sslab
