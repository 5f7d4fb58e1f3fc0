#include "msnet/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "msnet/error.hpp"

namespace msnet {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'S', 'N', 'R'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kFlagVelocities = 1;

// ---- little-endian primitives ----

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;
  std::string path;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n)
      throw DataError(path + ": truncated rollout file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    return std::bit_cast<double>(bits);
  }
};

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_all(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("write failed: " + path);
}

void put_trajectory(std::string& out, const Trajectory3& t) {
  for (const Vec3& v : t.data) {
    put_f64(out, v.x);
    put_f64(out, v.y);
    put_f64(out, v.z);
  }
}

json rollout_metadata(const SourceRollout& r) {
  json meta;
  meta["rows"] = r.rows;
  meta["cols"] = r.cols;
  meta["width"] = r.width;
  meta["height"] = r.height;
  meta["dt"] = r.dt;
  meta["density"] = r.density;
  meta["gravity"] = {r.external.gravity.x, r.external.gravity.y, r.external.gravity.z};
  meta["rayleigh"] = r.external.rayleigh_b;
  meta["kind"] = to_string(r.kind);
  meta["seed"] = r.seed;
  meta["spec_hash"] = r.spec_hash;
  json pinned = json::array();
  for (std::size_t i = 0; i < r.pinned.size(); ++i)
    if (r.pinned[i]) pinned.push_back(i);
  meta["pinned"] = std::move(pinned);
  return meta;
}

std::string b64_f64(std::span<const double> values) {
  std::string bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) put_f64(bytes, v);
  return base64_encode({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

std::vector<double> b64_to_f64(const std::string& text, const char* what) {
  const std::vector<std::uint8_t> bytes = base64_decode(text);
  if (bytes.size() % 8 != 0) throw DataError(std::string(what) + ": corrupt f64 array");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(bytes[i * 8 + j]) << (8 * j);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::string b64_u32(std::span<const std::uint32_t> values) {
  std::string bytes;
  bytes.reserve(values.size() * 4);
  for (std::uint32_t v : values) put_u32(bytes, v);
  return base64_encode({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

std::vector<std::uint32_t> b64_to_u32(const std::string& text, const char* what) {
  const std::vector<std::uint8_t> bytes = base64_decode(text);
  if (bytes.size() % 4 != 0) throw DataError(std::string(what) + ": corrupt u32 array");
  std::vector<std::uint32_t> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t v = 0;
    for (int j = 0; j < 4; ++j) v |= static_cast<std::uint32_t>(bytes[i * 4 + j]) << (8 * j);
    out[i] = v;
  }
  return out;
}

json load_json(const std::string& path) {
  const std::string text = read_all(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw DataError(path + ": invalid JSON");
  return j;
}

}  // namespace

void write_rollout_file(const std::string& path, const SourceRollout& rollout) {
  if (rollout.y.points <= 0 || rollout.y.frames() == 0)
    throw DataError("write_rollout_file: empty trajectory");
  const bool has_velocities = !rollout.ydot.empty();
  if (has_velocities &&
      (rollout.ydot.points != rollout.y.points || rollout.ydot.frames() != rollout.y.frames()))
    throw DataError("write_rollout_file: velocity block shape mismatch");

  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kVersion);
  put_u16(out, has_velocities ? kFlagVelocities : 0);

  const std::string meta = rollout_metadata(rollout).dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;

  put_u32(out, static_cast<std::uint32_t>(rollout.y.frames()));
  put_u32(out, static_cast<std::uint32_t>(rollout.y.points));
  put_trajectory(out, rollout.y);
  if (has_velocities) put_trajectory(out, rollout.ydot);
  write_all(path, out);
}

SourceRollout read_rollout_file(const std::string& path) {
  const std::string data = read_all(path);
  Reader r{reinterpret_cast<const std::uint8_t*>(data.data()),
           reinterpret_cast<const std::uint8_t*>(data.data()) + data.size(), path};

  r.need(4);
  if (std::memcmp(r.p, kMagic, 4) != 0) throw DataError(path + ": not a rollout file (bad magic)");
  r.p += 4;
  const std::uint16_t version = r.u16();
  if (version != kVersion)
    throw DataError(path + ": unsupported rollout version " + std::to_string(version));
  const std::uint16_t flags = r.u16();

  const std::uint32_t meta_len = r.u32();
  r.need(meta_len);
  const std::string meta_text(reinterpret_cast<const char*>(r.p), meta_len);
  r.p += meta_len;
  json meta = json::parse(meta_text, nullptr, false);
  if (meta.is_discarded()) throw DataError(path + ": corrupt metadata JSON");

  SourceRollout rollout;
  try {
    rollout.rows = meta.at("rows").get<std::int32_t>();
    rollout.cols = meta.at("cols").get<std::int32_t>();
    rollout.width = meta.at("width").get<double>();
    rollout.height = meta.at("height").get<double>();
    rollout.dt = meta.at("dt").get<double>();
    rollout.density = meta.at("density").get<double>();
    const auto g = meta.at("gravity");
    rollout.external.gravity = {g.at(0).get<double>(), g.at(1).get<double>(),
                                g.at(2).get<double>()};
    rollout.external.rayleigh_b = meta.at("rayleigh").get<double>();
    rollout.kind = meta.at("kind").get<std::string>() == "fem" ? SourceKind::fem
                                                               : SourceKind::mass_spring;
    rollout.seed = meta.at("seed").get<std::uint64_t>();
    rollout.spec_hash = meta.at("spec_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(path + ": metadata field error: " + e.what());
  }

  const std::uint32_t frames = r.u32();
  const std::uint32_t points = r.u32();
  const std::size_t expected = static_cast<std::size_t>(frames) * points;

  rollout.pinned.assign(points, 0);
  for (const auto& idx : meta.at("pinned")) {
    const std::size_t i = idx.get<std::size_t>();
    if (i >= points) throw DataError(path + ": pinned index out of range");
    rollout.pinned[i] = 1;
  }

  rollout.y.points = static_cast<std::int32_t>(points);
  rollout.y.data.resize(expected);
  for (Vec3& v : rollout.y.data) {
    v.x = r.f64();
    v.y = r.f64();
    v.z = r.f64();
  }
  if (flags & kFlagVelocities) {
    rollout.ydot.points = static_cast<std::int32_t>(points);
    rollout.ydot.data.resize(expected);
    for (Vec3& v : rollout.ydot.data) {
      v.x = r.f64();
      v.y = r.f64();
      v.z = r.f64();
    }
  }
  if (r.p != r.end) throw DataError(path + ": trailing bytes after payload");
  return rollout;
}

void write_model_file(const std::string& path, const ModelFile& model) {
  const std::size_t springs = model.net.springs.size();
  if (model.params.k.size() != springs || model.params.b.size() != springs)
    throw DataError("write_model_file: parameter arrays do not match the spring list");

  std::vector<std::uint32_t> a(springs), b(springs);
  std::vector<double> rest(springs);
  std::vector<std::uint8_t> cls(springs);
  for (std::size_t s = 0; s < springs; ++s) {
    a[s] = static_cast<std::uint32_t>(model.net.springs[s].a);
    b[s] = static_cast<std::uint32_t>(model.net.springs[s].b);
    rest[s] = model.net.springs[s].rest_length;
    cls[s] = static_cast<std::uint8_t>(model.net.springs[s].cls);
  }

  json j;
  j["format"] = "msnet-model";
  j["version"] = 1;
  j["grid"] = {{"rows", model.grid.rows},
               {"cols", model.grid.cols},
               {"width", model.grid.width},
               {"height", model.grid.height}};
  j["topology"] = {{"structural", model.topology.structural},
                   {"shear_main", model.topology.shear_main},
                   {"shear_anti", model.topology.shear_anti},
                   {"bending", model.topology.bending},
                   {"bending_stride", model.topology.bending_stride}};
  j["springs"] = {{"count", springs},
                  {"a", b64_u32(a)},
                  {"b", b64_u32(b)},
                  {"rest_length", b64_f64(rest)},
                  {"class", base64_encode(cls)}};
  j["params"] = {{"k", b64_f64(model.params.k)}, {"b", b64_f64(model.params.b)}};
  j["provenance"] = {{"curriculum", model.curriculum},
                     {"config_hash", model.config_hash},
                     {"seed", model.seed},
                     {"iterations", model.iterations},
                     {"final_loss", model.final_loss},
                     {"source_kind", model.source_kind}};
  write_all(path, j.dump(2) + "\n");
}

ModelFile read_model_file(const std::string& path) {
  const json j = load_json(path);
  ModelFile model;
  try {
    if (j.at("format").get<std::string>() != "msnet-model")
      throw DataError(path + ": not a model file");
    model.grid.rows = j.at("grid").at("rows").get<std::int32_t>();
    model.grid.cols = j.at("grid").at("cols").get<std::int32_t>();
    model.grid.width = j.at("grid").at("width").get<double>();
    model.grid.height = j.at("grid").at("height").get<double>();
    const auto& topo = j.at("topology");
    model.topology.structural = topo.at("structural").get<bool>();
    model.topology.shear_main = topo.at("shear_main").get<bool>();
    model.topology.shear_anti = topo.at("shear_anti").get<bool>();
    model.topology.bending = topo.at("bending").get<bool>();
    model.topology.bending_stride = topo.at("bending_stride").get<std::int32_t>();

    const auto& springs = j.at("springs");
    const std::size_t count = springs.at("count").get<std::size_t>();
    const auto a = b64_to_u32(springs.at("a").get<std::string>(), "model springs.a");
    const auto b = b64_to_u32(springs.at("b").get<std::string>(), "model springs.b");
    const auto rest = b64_to_f64(springs.at("rest_length").get<std::string>(), "model rest");
    const auto cls = base64_decode(springs.at("class").get<std::string>());
    if (a.size() != count || b.size() != count || rest.size() != count || cls.size() != count)
      throw DataError(path + ": inconsistent spring arrays");
    model.net.particle_count = model.grid.particle_count();
    model.net.springs.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
      model.net.springs[s] = {static_cast<std::int32_t>(a[s]), static_cast<std::int32_t>(b[s]),
                              rest[s], static_cast<SpringClass>(cls[s])};
    }
    model.params.k = b64_to_f64(j.at("params").at("k").get<std::string>(), "model k");
    model.params.b = b64_to_f64(j.at("params").at("b").get<std::string>(), "model b");
    if (model.params.k.size() != count || model.params.b.size() != count)
      throw DataError(path + ": parameter arrays do not match spring count");
    const auto& prov = j.at("provenance");
    model.curriculum = prov.at("curriculum").get<std::string>();
    model.config_hash = prov.at("config_hash").get<std::string>();
    model.seed = prov.at("seed").get<std::uint64_t>();
    model.iterations = prov.at("iterations").get<std::int64_t>();
    model.final_loss = prov.at("final_loss").get<double>();
    model.source_kind = prov.at("source_kind").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(path + ": model field error: " + e.what());
  }
  return model;
}

void write_clipset_file(const std::string& path, const ClipSetFile& file) {
  json j;
  j["format"] = "msnet-clipset";
  j["version"] = 1;
  j["length"] = file.clips.length;
  j["seed"] = file.clips.seed;
  j["rollouts"] = file.rollout_files;
  j["manifest_sha256"] = file.manifest_sha256;
  const auto clips_to_json = [](const std::vector<Clip>& clips) {
    json arr = json::array();
    for (const Clip& c : clips) arr.push_back({c.rollout, c.start});
    return arr;
  };
  j["general"] = clips_to_json(file.clips.general);
  j["low_velocity"] = clips_to_json(file.clips.low_velocity);
  write_all(path, j.dump(2) + "\n");
}

ClipSetFile read_clipset_file(const std::string& path) {
  const json j = load_json(path);
  ClipSetFile file;
  try {
    if (j.at("format").get<std::string>() != "msnet-clipset")
      throw DataError(path + ": not a clip set file");
    file.clips.length = j.at("length").get<std::int32_t>();
    file.clips.seed = j.at("seed").get<std::uint64_t>();
    file.rollout_files = j.at("rollouts").get<std::vector<std::string>>();
    file.manifest_sha256 = j.at("manifest_sha256").get<std::string>();
    const auto clips_from_json = [&](const json& arr) {
      std::vector<Clip> clips;
      for (const auto& item : arr)
        clips.push_back({item.at(0).get<std::int32_t>(), item.at(1).get<std::int32_t>(),
                         file.clips.length});
      return clips;
    };
    file.clips.general = clips_from_json(j.at("general"));
    file.clips.low_velocity = clips_from_json(j.at("low_velocity"));
  } catch (const json::exception& e) {
    throw DataError(path + ": clip set field error: " + e.what());
  }
  return file;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  json j;
  j["format"] = "msnet-manifest";
  j["version"] = 1;
  j["engine"] = manifest.engine;
  j["seed"] = manifest.seed;
  j["config_hash"] = manifest.config_hash;
  if (!manifest.truth_model.empty()) j["truth_model"] = manifest.truth_model;
  json files = json::array();
  for (const ManifestEntry& e : manifest.files)
    files.push_back({{"name", e.name},
                     {"sha256", e.sha256},
                     {"frames", e.frames},
                     {"landmarks", e.landmarks}});
  j["files"] = std::move(files);
  write_all(path, j.dump(2) + "\n");
}

Manifest read_manifest(const std::string& path) {
  const json j = load_json(path);
  Manifest manifest;
  try {
    if (j.at("format").get<std::string>() != "msnet-manifest")
      throw DataError(path + ": not a manifest");
    manifest.engine = j.at("engine").get<std::string>();
    manifest.seed = j.at("seed").get<std::uint64_t>();
    manifest.config_hash = j.at("config_hash").get<std::string>();
    if (j.contains("truth_model")) manifest.truth_model = j.at("truth_model").get<std::string>();
    for (const auto& f : j.at("files")) {
      ManifestEntry e;
      e.name = f.at("name").get<std::string>();
      e.sha256 = f.at("sha256").get<std::string>();
      e.frames = f.at("frames").get<std::uint32_t>();
      e.landmarks = f.at("landmarks").get<std::uint32_t>();
      manifest.files.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": manifest field error: " + e.what());
  }
  return manifest;
}

std::vector<std::string> verify_manifest(const std::string& manifest_path) {
  const Manifest manifest = read_manifest(manifest_path);
  const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
  std::vector<std::string> paths;
  for (const ManifestEntry& e : manifest.files) {
    const std::string full = (dir / e.name).string();
    const std::string digest = sha256_file(full);
    if (digest != e.sha256)
      throw DataError("manifest check failed for " + e.name + ": expected " + e.sha256 +
                      ", got " + digest);
    paths.push_back(full);
  }
  return paths;
}

namespace {

json moments_to_json(const AdamMoments& m) {
  return {{"m", b64_f64(m.m)}, {"v", b64_f64(m.v)}, {"t", m.t}};
}

AdamMoments moments_from_json(const json& j, const char* what) {
  AdamMoments m;
  m.m = b64_to_f64(j.at("m").get<std::string>(), what);
  m.v = b64_to_f64(j.at("v").get<std::string>(), what);
  m.t = j.at("t").get<std::int64_t>();
  return m;
}

}  // namespace

void write_checkpoint_file(const std::string& path, const TrainerState& state,
                           const std::string& config_hash) {
  json j;
  j["format"] = "msnet-checkpoint";
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["pass_index"] = state.pass_index;
  j["iteration"] = state.iteration;
  j["k"] = b64_f64(state.params.k);
  j["b"] = b64_f64(state.params.b);
  j["moments_k"] = moments_to_json(state.moments_k);
  j["moments_b"] = moments_to_json(state.moments_b);
  write_all(path, j.dump(2) + "\n");
}

TrainerState read_checkpoint_file(const std::string& path, std::string* config_hash) {
  const json j = load_json(path);
  TrainerState state;
  try {
    if (j.at("format").get<std::string>() != "msnet-checkpoint")
      throw DataError(path + ": not a checkpoint file");
    if (config_hash) *config_hash = j.at("config_hash").get<std::string>();
    state.pass_index = j.at("pass_index").get<std::int32_t>();
    state.iteration = j.at("iteration").get<std::int64_t>();
    state.params.k = b64_to_f64(j.at("k").get<std::string>(), "checkpoint k");
    state.params.b = b64_to_f64(j.at("b").get<std::string>(), "checkpoint b");
    state.moments_k = moments_from_json(j.at("moments_k"), "checkpoint moments_k");
    state.moments_b = moments_from_json(j.at("moments_b"), "checkpoint moments_b");
  } catch (const json::exception& e) {
    throw DataError(path + ": checkpoint field error: " + e.what());
  }
  return state;
}

std::string iteration_record_json(const IterationRecord& record) {
  json j;
  j["iter"] = record.iteration;
  j["pass"] = to_string(record.pass);
  j["loss_f"] = record.loss.force;
  j["loss_j"] = record.loss.impulse;
  j["loss_pos"] = record.loss.position;
  j["loss_k_neg"] = record.loss.k_negative;
  j["loss_b_neg"] = record.loss.b_negative;
  j["loss"] = record.weighted_total;
  j["grad_norm_k"] = record.grad_norm_k;
  j["grad_norm_b"] = record.grad_norm_b;
  j["k_mean"] = record.k_mean;
  j["k_min"] = record.k_min;
  j["k_max"] = record.k_max;
  j["b_mean"] = record.b_mean;
  j["b_min"] = record.b_min;
  j["b_max"] = record.b_max;
  j["clips_used"] = record.clips_used;
  j["clips_skipped"] = record.clips_skipped;
  j["step_skipped"] = record.step_skipped;
  return j.dump();
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw DataError("sha256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string sha256_file(const std::string& path) {
  const std::string data = read_all(path);
  return sha256_hex(data);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static const char* table = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(table[(n >> 18) & 63]);
    out.push_back(table[(n >> 12) & 63]);
    out.push_back(table[(n >> 6) & 63]);
    out.push_back(table[n & 63]);
  }
  const std::size_t rem = bytes.size() - i;
  if (rem == 1) {
    const std::uint32_t n = bytes[i] << 16;
    out.push_back(table[(n >> 18) & 63]);
    out.push_back(table[(n >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rem == 2) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(table[(n >> 18) & 63]);
    out.push_back(table[(n >> 12) & 63]);
    out.push_back(table[(n >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  const auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw DataError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        vals[j] = 0;
        ++pad;
      } else {
        vals[j] = value_of(c);
        if (vals[j] < 0 || pad > 0) throw DataError("base64: invalid character");
      }
    }
    const std::uint32_t n = (static_cast<std::uint32_t>(vals[0]) << 18) |
                            (static_cast<std::uint32_t>(vals[1]) << 12) |
                            (static_cast<std::uint32_t>(vals[2]) << 6) |
                            static_cast<std::uint32_t>(vals[3]);
    out.push_back(static_cast<std::uint8_t>((n >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

}  // namespace msnet
