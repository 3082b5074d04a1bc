#include "dnerf/field.hpp"

#include <nlohmann/json.hpp>

namespace dnerf {

namespace {

using nlohmann::json;

json encoding_to_json(const EncodingConfig& e) {
  return json{{"bands", e.bands}, {"include_input", e.include_input}};
}

EncodingConfig encoding_from_json(const json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("bands")) throw ValidationError(field, "bad encoding config");
  EncodingConfig e;
  e.bands = j.at("bands").get<int>();
  e.include_input = j.value("include_input", false);
  return e;
}

}  // namespace

std::string field_config_to_json(const FieldCheckpointMeta& meta) {
  const FieldConfig& c = meta.cfg;
  json j{{"kind", "field"},
         {"arch",
          {{"pos_enc", encoding_to_json(c.pos_enc)},
           {"dir_enc", encoding_to_json(c.dir_enc)},
           {"et_enc", encoding_to_json(c.et_enc)},
           {"latent_dim", c.latent_dim},
           {"cond_width", c.cond_width},
           {"audio_dim", c.audio_dim},
           {"expr_dim", c.expr_dim},
           {"depth", c.depth},
           {"width", c.width},
           {"skip", c.skip},
           {"color_hidden", c.color_hidden},
           {"deform_depth", c.deform_depth},
           {"deform_width", c.deform_width},
           {"deform_enabled", c.deform_enabled},
           {"hidden_act", act_to_string(c.hidden_act)}}},
         {"identities", meta.identity_ids},
         {"iteration", meta.iteration}};
  return j.dump();
}

FieldCheckpointMeta field_config_from_json(const std::string& text, const std::string& field) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ValidationError(field, "checkpoint config is not valid JSON");
  if (j.value("kind", "") != "field")
    throw ValidationError(field, "checkpoint kind is not \"field\"");
  if (!j.contains("arch") || !j.contains("identities"))
    throw ValidationError(field, "checkpoint config lacks arch/identities");
  const json& a = j["arch"];
  FieldCheckpointMeta meta;
  FieldConfig& c = meta.cfg;
  try {
    c.pos_enc = encoding_from_json(a.at("pos_enc"), field);
    c.dir_enc = encoding_from_json(a.at("dir_enc"), field);
    c.et_enc = encoding_from_json(a.at("et_enc"), field);
    c.latent_dim = a.at("latent_dim").get<int>();
    c.cond_width = a.at("cond_width").get<int>();
    c.audio_dim = a.at("audio_dim").get<int>();
    c.expr_dim = a.at("expr_dim").get<int>();
    c.depth = a.at("depth").get<int>();
    c.width = a.at("width").get<int>();
    c.skip = a.at("skip").get<int>();
    c.color_hidden = a.at("color_hidden").get<int>();
    c.deform_depth = a.at("deform_depth").get<int>();
    c.deform_width = a.at("deform_width").get<int>();
    c.deform_enabled = a.at("deform_enabled").get<bool>();
    c.hidden_act = act_from_string(a.at("hidden_act").get<std::string>(), field);
    meta.identity_ids = j.at("identities").get<std::vector<std::string>>();
    meta.iteration = j.value("iteration", int64_t(0));
  } catch (const json::exception& e) {
    throw ValidationError(field, std::string("malformed checkpoint config: ") + e.what());
  }
  c.validate(field);
  if (meta.identity_ids.empty()) throw ValidationError(field, "checkpoint has no identities");
  return meta;
}

namespace {

TensorBlob mat_to_blob(const MatX<float>& m) {
  TensorBlob b;
  b.dims = {uint32_t(m.rows()), uint32_t(m.cols())};
  b.data.assign(m.data(), m.data() + m.size());
  return b;
}

void mat_from_blob(MatX<float>& m, const TensorBlob& b, const std::string& name,
                   const std::string& field) {
  if (b.dims.size() != 2 || Eigen::Index(b.dims[0]) != m.rows() ||
      Eigen::Index(b.dims[1]) != m.cols())
    throw ValidationError(field, "shape mismatch for tensor " + name);
  std::copy(b.data.begin(), b.data.end(), m.data());
}

}  // namespace

Checkpoint field_to_checkpoint(FieldModel<float>& model, int64_t iteration,
                               const std::vector<MatX<float>>* adam_m,
                               const std::vector<MatX<float>>* adam_v, int64_t adam_step) {
  FieldCheckpointMeta meta;
  meta.cfg = model.cfg;
  for (const auto& [id, ic] : model.codes) meta.identity_ids.push_back(id);
  meta.iteration = iteration;

  Checkpoint ck;
  {
    nlohmann::json j = nlohmann::json::parse(field_config_to_json(meta));
    j["adam_step"] = adam_step;
    j["has_adam"] = (adam_m != nullptr);
    ck.config = j.dump();
  }
  auto params = model.params();
  for (const auto* p : params) ck.add(p->name, p->to_blob());
  if (adam_m) {
    if (adam_m->size() != params.size() || !adam_v || adam_v->size() != params.size())
      throw PipelineError("adam state does not match parameter registry");
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck.add("adam.m." + params[i]->name, mat_to_blob((*adam_m)[i]));
      ck.add("adam.v." + params[i]->name, mat_to_blob((*adam_v)[i]));
    }
  }
  return ck;
}

void field_from_checkpoint(const Checkpoint& ck, FieldModel<float>& model,
                           FieldCheckpointMeta& meta, std::vector<MatX<float>>* adam_m,
                           std::vector<MatX<float>>* adam_v, int64_t* adam_step,
                           const std::string& field) {
  meta = field_config_from_json(ck.config, field);
  model.init(meta.cfg, meta.identity_ids, /*seed=*/0);
  auto params = model.params();
  for (auto* p : params) p->from_blob(ck.require(p->name, field), field);

  nlohmann::json j = nlohmann::json::parse(ck.config);
  if (adam_step) *adam_step = j.value("adam_step", int64_t(0));
  if (adam_m && adam_v) {
    if (!j.value("has_adam", false))
      throw ValidationError(field, "checkpoint has no optimizer state to resume from");
    adam_m->clear();
    adam_v->clear();
    for (const auto* p : params) {
      const TensorBlob& bm = ck.require("adam.m." + p->name, field);
      const TensorBlob& bv = ck.require("adam.v." + p->name, field);
      MatX<float> m(p->value.rows(), p->value.cols()), v(p->value.rows(), p->value.cols());
      mat_from_blob(m, bm, "adam.m." + p->name, field);
      mat_from_blob(v, bv, "adam.v." + p->name, field);
      adam_m->push_back(std::move(m));
      adam_v->push_back(std::move(v));
    }
  }
}

}  // namespace dnerf
