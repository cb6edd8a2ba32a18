#include "ctune/persistence.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ctune/digest.hpp"

namespace ctune {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr char kMaskMagic[4] = {'R', 'L', 'E', '1'};
constexpr char kCheckpointMagic[4] = {'C', 'T', 'C', 'K'};

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return ss.str();
}

void write_bytes(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <class T>
void append_pod(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

// Bounds-checked reader over an in-memory file.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <class T>
  T pod() {
    T v;
    std::memcpy(&v, take(sizeof v).data(), sizeof v);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw IoError(what_ + ": file is truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

json read_json_file(const fs::path& path) {
  const std::string text = read_bytes(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": invalid JSON: " + e.what());
  }
}

std::string encode_mask_file(const Mask& mask) {
  const auto runs = rle_encode(mask);
  std::string buf(kMaskMagic, 4);
  append_pod(buf, static_cast<std::uint32_t>(mask.height()));
  append_pod(buf, static_cast<std::uint32_t>(mask.width()));
  append_pod(buf, static_cast<std::uint32_t>(runs.size()));
  for (auto r : runs) append_pod(buf, r);
  return buf;
}

Mask decode_mask_file(std::string_view bytes, const std::string& what) {
  ByteReader in(bytes, what);
  if (in.take(4) != std::string_view(kMaskMagic, 4)) throw IoError(what + ": not a mask file");
  const auto h = in.pod<std::uint32_t>();
  const auto w = in.pod<std::uint32_t>();
  const auto count = in.pod<std::uint32_t>();
  std::vector<std::uint32_t> runs(count);
  for (auto& r : runs) r = in.pod<std::uint32_t>();
  if (in.remaining() != 0) throw IoError(what + ": trailing bytes");
  try {
    return rle_decode(runs, GridDims{static_cast<int>(h), static_cast<int>(w)});
  } catch (const Error& e) {
    throw IoError(what + ": " + e.what());
  }
}

json annotation_to_json(const AnnotationSet& set, const std::string& scan_id, const std::string& tag,
                        const fs::path& root) {
  json channels = json::array();
  for (const auto& [k, ch] : set.channels) {
    const std::string rel = "masks/" + scan_id + "/" + tag + "/" + std::to_string(k) + ".rle";
    const std::string bytes = encode_mask_file(ch.mask);
    write_bytes(root / rel, bytes);
    channels.push_back({{"class_id", k},
                        {"provenance", std::string(to_string(ch.provenance))},
                        {"path", rel},
                        {"digest", digest_bytes(bytes)}});
  }
  return {{"m", set.m}, {"channels", channels}};
}

AnnotationSet annotation_from_json(const json& j, const fs::path& root, GridDims dims, const std::string& scan_id,
                                   bool verify) {
  AnnotationSet set;
  for (const auto& c : j.at("channels")) {
    const std::string rel = c.at("path").get<std::string>();
    const std::string what = "scan " + scan_id + " mask " + rel;
    if (!fs::exists(root / rel)) throw IoError(what + ": missing file");
    const std::string bytes = read_bytes(root / rel);
    if (verify && digest_bytes(bytes) != c.at("digest").get<std::string>()) {
      throw IoError(what + ": digest mismatch");
    }
    MaskChannel ch;
    ch.class_id = c.at("class_id").get<ClassId>();
    ch.provenance = provenance_from_string(c.at("provenance").get<std::string>());
    ch.mask = decode_mask_file(bytes, what);
    if (ch.mask.dims() != dims) throw IoError(what + ": grid is " + to_string(ch.mask.dims()));
    set.channels.emplace(ch.class_id, std::move(ch));
  }
  set.m = j.at("m").get<std::size_t>();
  return set;
}

json class_names(const ClassSet& classes, const ClassCatalog& catalog) {
  json out = json::array();
  for (ClassId k : classes) out.push_back(catalog.name(k));
  return out;
}

ClassSet class_ids(const json& j, const ClassCatalog& catalog) {
  ClassSet out;
  for (const auto& v : j) out.insert(v.is_string() ? catalog.id_of(v.get<std::string>()) : v.get<ClassId>());
  return out;
}

json dsc_map(const std::map<ClassId, double>& values, const ClassCatalog& catalog) {
  json out = json::object();
  for (const auto& [k, v] : values) out[catalog.name(k)] = v;
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double monotonic_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

void check_format_version(const std::string& version, const std::string& what) {
  const auto dot = version.find('.');
  int major = -1;
  try {
    major = std::stoi(version.substr(0, dot));
  } catch (const std::exception&) {
    throw IoError(what + ": unreadable format_version '" + version + "'");
  }
  if (major != kFormatMajor) {
    throw IoError(what + ": unsupported format_version " + version + " (expected major " +
                  std::to_string(kFormatMajor) + ")");
  }
}

// ---- masks ---------------------------------------------------------------

std::vector<std::uint32_t> rle_encode(const Mask& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (std::uint8_t v : mask.values()) {
    if (v > 1) throw DomainError("rle_encode: mask is not binary");
    if (v != current) {
      runs.push_back(length);
      current = v;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

Mask rle_decode(const std::vector<std::uint32_t>& runs, GridDims dims) {
  std::uint64_t total = 0;
  for (auto r : runs) total += r;
  if (total != dims.size()) {
    throw ShapeError("run lengths sum to " + std::to_string(total) + ", expected " + std::to_string(dims.size()));
  }
  Mask mask(dims);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto r : runs) {
    std::fill_n(mask.values().begin() + static_cast<std::ptrdiff_t>(pos), r, value);
    pos += r;
    value ^= 1;
  }
  return mask;
}

// ---- datasets ------------------------------------------------------------

void save_dataset(const fs::path& dir, const std::vector<Scan>& scans, const ClassCatalog& catalog) {
  fs::create_directories(dir);
  const DatasetManifest manifest = make_manifest(scans, catalog);
  json entries = json::array();
  for (const Scan& scan : scans) {
    const std::string image_rel = "images/" + scan.scan_id + ".f32";
    const std::string sidecar_rel = "images/" + scan.scan_id + ".json";
    const auto& px = scan.image.storage();
    const std::string_view bytes(reinterpret_cast<const char*>(px.data()), px.size() * sizeof(float));
    write_bytes(dir / image_rel, bytes);
    const json sidecar = {{"format_version", kFormatVersion},
                          {"scan_id", scan.scan_id},
                          {"height", scan.image.height()},
                          {"width", scan.image.width()},
                          {"dtype", "float32le"},
                          {"seed", scan.seed}};
    write_bytes(dir / sidecar_rel, sidecar.dump(2) + "\n");

    json annotations = json::object();
    for (const auto& [tag, set] : scan.annotations) annotations[tag] = annotation_to_json(set, scan.scan_id, tag, dir);
    entries.push_back({{"scan_id", scan.scan_id},
                       {"seed", scan.seed},
                       {"image", image_rel},
                       {"image_digest", digest_bytes(bytes)},
                       {"sidecar", sidecar_rel},
                       {"content_digest", scan_digest(scan)},
                       {"ground_truth", annotation_to_json(scan.ground_truth, scan.scan_id, "ground_truth", dir)},
                       {"annotations", annotations}});
  }
  const json j = {{"format_version", kFormatVersion},
                  {"height", manifest.dims.height},
                  {"width", manifest.dims.width},
                  {"catalog", to_json(catalog)},
                  {"manifest_digest", manifest.digest()},
                  {"scans", entries}};
  write_bytes(dir / "manifest.json", j.dump(2) + "\n");
}

LoadedDataset load_dataset(const fs::path& dir, bool verify_digests) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("no manifest.json in " + dir.string());
  const json j = read_json_file(manifest_path);
  try {
    check_format_version(j.at("format_version").get<std::string>(), manifest_path.string());
    LoadedDataset out;
    const ClassCatalog catalog = catalog_from_json(j.at("catalog"));
    const GridDims dims{j.at("height").get<int>(), j.at("width").get<int>()};
    for (const auto& e : j.at("scans")) {
      Scan scan;
      scan.scan_id = e.at("scan_id").get<std::string>();
      scan.seed = e.at("seed").get<std::uint64_t>();
      const std::string what = "scan " + scan.scan_id;
      const fs::path sidecar_path = dir / e.at("sidecar").get<std::string>();
      if (!fs::exists(sidecar_path)) throw IoError(what + ": missing sidecar " + sidecar_path.string());
      const json sidecar = read_json_file(sidecar_path);
      check_format_version(sidecar.at("format_version").get<std::string>(), what + " sidecar");
      const GridDims image_dims{sidecar.at("height").get<int>(), sidecar.at("width").get<int>()};
      if (image_dims != dims) throw IoError(what + ": image grid " + to_string(image_dims));

      const fs::path image_path = dir / e.at("image").get<std::string>();
      if (!fs::exists(image_path)) throw IoError(what + ": missing image " + image_path.string());
      const std::string bytes = read_bytes(image_path);
      if (bytes.size() != dims.size() * sizeof(float)) throw IoError(what + ": image file is truncated");
      if (verify_digests && digest_bytes(bytes) != e.at("image_digest").get<std::string>()) {
        throw IoError(what + ": image digest mismatch");
      }
      std::vector<float> px(dims.size());
      std::memcpy(px.data(), bytes.data(), bytes.size());
      scan.image = Image(dims, std::move(px));

      scan.ground_truth = annotation_from_json(e.at("ground_truth"), dir, dims, scan.scan_id, verify_digests);
      for (const auto& [tag, set] : e.at("annotations").items()) {
        scan.annotations.emplace(tag, annotation_from_json(set, dir, dims, scan.scan_id, verify_digests));
      }
      if (verify_digests && scan_digest(scan) != e.at("content_digest").get<std::string>()) {
        throw IoError(what + ": content digest mismatch");
      }
      out.scans.push_back(std::move(scan));
    }
    out.manifest = make_manifest(out.scans, catalog);
    out.manifest.dims = dims;
    if (verify_digests && out.manifest.digest() != j.at("manifest_digest").get<std::string>()) {
      throw IoError(manifest_path.string() + ": manifest digest mismatch");
    }
    return out;
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
}

// ---- checkpoints ---------------------------------------------------------

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  std::string payload;
  json tensors = json::array();
  checkpoint.params.for_each([&](const std::string& name, const Tensor& t) {
    tensors.push_back({{"name", name},
                       {"partition", partition_label(name)},
                       {"shape", t.shape},
                       {"offset", payload.size() / sizeof(double)}});
    payload.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(double));
  });
  json header = {{"format_version", checkpoint.format_version},
                 {"arch", to_json(checkpoint.params.arch)},
                 {"tensors", tensors}};
  json classes = json::array();
  for (const auto& [k, _] : checkpoint.params.class_specific) classes.push_back(k);
  header["classes"] = classes;
  const auto& prov = checkpoint.provenance;
  header["provenance"] = {{"config_digest", prov.config_digest},
                          {"epoch", prov.epoch},
                          {"round", prov.round},
                          {"regime", prov.regime},
                          {"learned_classes", prov.learned_classes}};
  if (checkpoint.optimizer) {
    json opt = json::array();
    for (const auto& [name, st] : *checkpoint.optimizer) {
      if (st.m.size() != st.v.size()) throw ContractError("optimizer moments for " + name + " differ in size");
      opt.push_back({{"name", name},
                     {"step", st.step},
                     {"count", st.m.size()},
                     {"offset", payload.size() / sizeof(double)}});
      payload.append(reinterpret_cast<const char*>(st.m.data()), st.m.size() * sizeof(double));
      payload.append(reinterpret_cast<const char*>(st.v.data()), st.v.size() * sizeof(double));
    }
    header["optimizer"] = opt;
  }
  header["payload_doubles"] = payload.size() / sizeof(double);
  header["payload_digest"] = digest_bytes(payload);

  const std::string header_text = header.dump();
  std::string buf(kCheckpointMagic, 4);
  append_pod(buf, static_cast<std::uint64_t>(header_text.size()));
  buf += header_text;
  buf += payload;
  write_bytes(path, buf);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string what = "checkpoint " + path.string();
  if (!fs::exists(path)) throw IoError(what + ": missing file");
  const std::string bytes = read_bytes(path);
  ByteReader in(bytes, what);
  if (in.take(4) != std::string_view(kCheckpointMagic, 4)) throw IoError(what + ": bad magic");
  const auto header_len = in.pod<std::uint64_t>();
  json header;
  try {
    header = json::parse(in.take(header_len));
  } catch (const json::exception& e) {
    throw IoError(what + ": invalid header: " + e.what());
  }
  const std::string_view payload = in.take(in.remaining());

  try {
    Checkpoint ck;
    ck.format_version = header.at("format_version").get<std::string>();
    check_format_version(ck.format_version, what);
    if (payload.size() != header.at("payload_doubles").get<std::size_t>() * sizeof(double)) {
      throw IoError(what + ": payload is truncated");
    }
    if (digest_bytes(payload) != header.at("payload_digest").get<std::string>()) {
      throw IoError(what + ": payload digest mismatch");
    }
    const std::size_t n_doubles = payload.size() / sizeof(double);
    auto read_doubles = [&](std::size_t offset, std::size_t count, const std::string& name) {
      if (offset > n_doubles || count > n_doubles - offset) throw IoError(what + ": " + name + " exceeds payload");
      std::vector<double> v(count);
      std::memcpy(v.data(), payload.data() + offset * sizeof(double), count * sizeof(double));
      return v;
    };

    const ArchConfig arch = arch_from_json(header.at("arch"));
    ClassSet classes;
    for (const auto& k : header.at("classes")) classes.insert(k.get<ClassId>());
    ck.params = model_skeleton(arch, classes);

    std::set<std::string> seen;
    for (const auto& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const std::string label = t.at("partition").get<std::string>();
      if (label != partition_label(name)) {
        throw StructuralError(what + ": tensor " + name + " carries partition label " + label);
      }
      if (!seen.insert(name).second) throw StructuralError(what + ": tensor " + name + " appears twice");
      if (!ck.params.contains(name)) throw StructuralError(what + ": unknown tensor " + name);
      Tensor& dst = ck.params.tensor(name);
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape != dst.shape) throw StructuralError(what + ": tensor " + name + " has an unexpected shape");
      dst.values = read_doubles(t.at("offset").get<std::size_t>(), dst.values.size(), name);
    }
    // Partition totality: every tensor the structure implies must be present.
    std::set<std::string> missing_classes;
    bool missing_shared = false;
    for (const auto& name : ck.params.names()) {
      if (seen.count(name)) continue;
      const std::string label = partition_label(name);
      if (label == "shared") {
        missing_shared = true;
      } else {
        missing_classes.insert(label.substr(6));
      }
    }
    if (!missing_classes.empty() || missing_shared) {
      std::string msg = what + ": incomplete parameters;";
      if (missing_shared) msg += " shared backbone tensors missing;";
      if (!missing_classes.empty()) {
        msg += " missing class-specific tensors for class";
        for (const auto& c : missing_classes) msg += " " + c;
      }
      throw StructuralError(msg);
    }

    if (header.contains("optimizer")) {
      OptimizerState opt;
      for (const auto& o : header.at("optimizer")) {
        const std::string name = o.at("name").get<std::string>();
        const auto count = o.at("count").get<std::size_t>();
        const auto offset = o.at("offset").get<std::size_t>();
        MomentState st;
        st.step = o.at("step").get<std::int64_t>();
        st.m = read_doubles(offset, count, name);
        st.v = read_doubles(offset + count, count, name);
        opt.emplace(name, std::move(st));
      }
      ck.optimizer = std::move(opt);
    }
    const auto& prov = header.at("provenance");
    ck.provenance.config_digest = prov.at("config_digest").get<std::string>();
    ck.provenance.epoch = prov.at("epoch").get<int>();
    ck.provenance.round = prov.at("round").get<int>();
    ck.provenance.regime = prov.at("regime").get<std::string>();
    ck.provenance.learned_classes = prov.at("learned_classes").get<ClassSet>();
    return ck;
  } catch (const json::exception& e) {
    throw IoError(what + ": malformed header: " + e.what());
  }
}

Checkpoint load_checkpoint(const fs::path& path, const ArchConfig& arch, const ClassSet& classes) {
  Checkpoint ck = load_checkpoint(path);
  const ModelParams expected = model_skeleton(arch, classes);
  std::set<std::string> missing_classes;
  for (const auto& name : expected.names()) {
    if (!ck.params.contains(name)) {
      const std::string label = partition_label(name);
      if (label != "shared") missing_classes.insert(label.substr(6));
      if (label == "shared") throw StructuralError("checkpoint lacks backbone tensor " + name);
    } else if (ck.params.tensor(name).shape != expected.tensor(name).shape) {
      throw StructuralError("checkpoint tensor " + name + " does not fit the requested architecture");
    }
  }
  if (!missing_classes.empty()) {
    std::string msg = "checkpoint lacks class-specific tensors for class";
    for (const auto& c : missing_classes) msg += " " + c;
    throw StructuralError(msg);
  }
  for (const auto& name : ck.params.names()) {
    if (!expected.contains(name)) throw StructuralError("checkpoint holds unknown tensor " + name);
  }
  return ck;
}

// ---- configs -------------------------------------------------------------

json to_json(const ArchConfig& arch) {
  return {{"encoder_channels", arch.encoder_channels},
          {"bottleneck_channels", arch.bottleneck_channels},
          {"feature_channels", arch.feature_channels},
          {"embedding_dim", arch.embedding_dim}};
}

ArchConfig arch_from_json(const json& j, ArchConfig base) {
  base.encoder_channels = j.value("encoder_channels", base.encoder_channels);
  base.bottleneck_channels = j.value("bottleneck_channels", base.bottleneck_channels);
  base.feature_channels = j.value("feature_channels", base.feature_channels);
  base.embedding_dim = j.value("embedding_dim", base.embedding_dim);
  base.validate();
  return base;
}

json to_json(const TuningConfig& t) {
  return {{"data_strategy", std::string(to_string(t.data_strategy))},
          {"freeze_shared", t.freeze_shared},
          {"freeze_embeddings", t.freeze_embeddings},
          {"reuse_fraction", t.reuse_fraction},
          {"epochs", t.epochs},
          {"base_lr", t.base_lr},
          {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size},
          {"warmup_epochs", t.warmup_epochs},
          {"seed", t.seed},
          {"loss_mix", t.loss_mix}};
}

TuningConfig tuning_from_json(const json& j, TuningConfig base) {
  if (j.contains("data_strategy")) base.data_strategy = data_strategy_from_string(j.at("data_strategy").get<std::string>());
  base.freeze_shared = j.value("freeze_shared", base.freeze_shared);
  base.freeze_embeddings = j.value("freeze_embeddings", base.freeze_embeddings);
  base.reuse_fraction = j.value("reuse_fraction", base.reuse_fraction);
  base.epochs = j.value("epochs", base.epochs);
  base.base_lr = j.value("base_lr", base.base_lr);
  base.weight_decay = j.value("weight_decay", base.weight_decay);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.warmup_epochs = j.value("warmup_epochs", base.warmup_epochs);
  base.seed = j.value("seed", base.seed);
  base.loss_mix = j.value("loss_mix", base.loss_mix);
  base.validate();
  return base;
}

json to_json(const ClassCatalog& catalog) {
  json names = json::array();
  for (const auto& c : catalog.classes()) names.push_back(c.name);
  return {{"classes", names},
          {"old", class_names(catalog.old_classes(), catalog)},
          {"new", class_names(catalog.new_classes(), catalog)}};
}

ClassCatalog catalog_from_json(const json& j) {
  std::vector<ClassInfo> infos;
  for (const auto& name : j.at("classes")) {
    infos.push_back({static_cast<ClassId>(infos.size()), name.get<std::string>()});
  }
  // Resolve names against a provisional catalog before the split is validated.
  const ClassCatalog names_only(infos, {}, {});
  return ClassCatalog(infos, class_ids(j.value("old", json::array()), names_only),
                      class_ids(j.value("new", json::array()), names_only));
}

namespace {

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json phantom_json(const PhantomSpec& p, const ClassCatalog& catalog) {
  json blobs = json::array();
  for (const auto& b : p.blobs) {
    blobs.push_back({{"center_y", range_json(b.center_y)},
                     {"center_x", range_json(b.center_x)},
                     {"radius_y", range_json(b.radius_y)},
                     {"radius_x", range_json(b.radius_x)},
                     {"intensity", b.intensity}});
  }
  json pairs = json::array();
  for (const auto& [a, b] : p.touching_pairs) pairs.push_back({catalog.name(a), catalog.name(b)});
  return {{"height", p.grid.height}, {"width", p.grid.width}, {"noise_sigma", p.noise_sigma},
          {"allow_touching", p.allow_touching}, {"touching_pairs", pairs}, {"blobs", blobs}};
}

PhantomSpec phantom_from(const json& j, const ClassCatalog& catalog, const PhantomSpec& base) {
  const GridDims grid{j.value("height", base.grid.height), j.value("width", base.grid.width)};
  // Without explicit blobs the default layout is rescaled to the new grid.
  PhantomSpec p = base;
  p.grid = grid;
  p.noise_sigma = j.value("noise_sigma", base.noise_sigma);
  p.allow_touching = j.value("allow_touching", base.allow_touching);
  if (j.contains("touching_pairs")) {
    p.touching_pairs.clear();
    for (const auto& pr : j.at("touching_pairs")) {
      auto id = [&](const json& v) { return v.is_string() ? catalog.id_of(v.get<std::string>()) : v.get<ClassId>(); };
      p.touching_pairs.emplace_back(id(pr.at(0)), id(pr.at(1)));
    }
  }
  if (j.contains("blobs")) {
    p.blobs.clear();
    for (const auto& b : j.at("blobs")) {
      p.blobs.push_back({range_from(b.at("center_y")), range_from(b.at("center_x")), range_from(b.at("radius_y")),
                         range_from(b.at("radius_x")), b.at("intensity").get<double>()});
    }
  }
  return p;
}

std::string pool_name(PoolSource s) { return s == PoolSource::base ? "base" : "fresh"; }

PoolSource pool_from(const std::string& s) {
  if (s == "base") return PoolSource::base;
  if (s == "fresh") return PoolSource::fresh;
  throw DomainError("unknown pool source '" + s + "'");
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json rounds = json::array();
  for (const auto& r : c.rounds) {
    rounds.push_back({{"pool", pool_name(r.pool_source)},
                      {"pool_size", r.pool_size},
                      {"n_select", r.n_select},
                      {"classes_to_revise", class_names(r.classes_to_revise, c.catalog)}});
  }
  json regimes = json::array();
  for (const auto& r : c.regimes) regimes.push_back({{"name", r.name}, {"tuning", to_json(r.tuning)}});
  return {{"format_version", kFormatVersion},
          {"seed", c.seed},
          {"catalog", to_json(c.catalog)},
          {"phantom", phantom_json(c.phantom, c.catalog)},
          {"arch", to_json(c.arch)},
          {"base_train_size", c.base_train_size},
          {"test_size", c.test_size},
          {"validation_size", c.validation_size},
          {"base_training", to_json(c.base_training)},
          {"rounds", rounds},
          {"regimes", regimes},
          {"weights",
           {{"uncertainty", c.weights.uncertainty},
            {"consistency", c.weights.consistency},
            {"overlap", c.weights.overlap}}},
          {"threshold", c.threshold}};
}

ExperimentConfig experiment_from_json(const json& j) {
  try {
    if (j.contains("format_version")) check_format_version(j.at("format_version").get<std::string>(), "config");
    ExperimentConfig c = ExperimentConfig::desk_reference();
    if (j.contains("catalog")) c.catalog = catalog_from_json(j.at("catalog"));
    if (j.contains("phantom")) {
      const auto& p = j.at("phantom");
      const GridDims grid{p.value("height", c.phantom.grid.height), p.value("width", c.phantom.grid.width)};
      c.phantom = phantom_from(p, c.catalog, PhantomSpec::abdominal(grid));
    }
    if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"), c.arch);
    c.seed = j.value("seed", c.seed);
    c.base_train_size = j.value("base_train_size", c.base_train_size);
    c.test_size = j.value("test_size", c.test_size);
    c.validation_size = j.value("validation_size", c.validation_size);
    if (j.contains("base_training")) c.base_training = tuning_from_json(j.at("base_training"), c.base_training);
    if (j.contains("rounds")) {
      c.rounds.clear();
      for (const auto& r : j.at("rounds")) {
        RoundSpec spec;
        spec.pool_source = pool_from(r.value("pool", std::string("fresh")));
        spec.pool_size = r.value("pool_size", spec.pool_size);
        spec.n_select = r.value("n_select", spec.n_select);
        spec.classes_to_revise = r.contains("classes_to_revise") ? class_ids(r.at("classes_to_revise"), c.catalog)
                                                                 : c.catalog.new_classes();
        c.rounds.push_back(std::move(spec));
      }
    }
    if (j.contains("regimes")) {
      // Regimes named like a packaged regime start from its settings.
      const auto defaults = c.regimes;
      c.regimes.clear();
      for (const auto& r : j.at("regimes")) {
        Regime regime;
        regime.name = r.at("name").get<std::string>();
        TuningConfig base = TuningConfig::desk();
        for (const auto& d : defaults) {
          if (d.name == regime.name) base = d.tuning;
        }
        regime.tuning = tuning_from_json(r.value("tuning", json::object()), base);
        c.regimes.push_back(std::move(regime));
      }
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      c.weights.uncertainty = w.value("uncertainty", c.weights.uncertainty);
      c.weights.consistency = w.value("consistency", c.weights.consistency);
      c.weights.overlap = w.value("overlap", c.weights.overlap);
    }
    c.threshold = j.value("threshold", c.threshold);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ContractError("override '" + ov + "' is not key=value");
    const std::string key = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ContractError("override '" + ov + "' has an empty key segment");
      if (node->is_array()) {
        std::size_t idx = 0;
        try {
          idx = std::stoul(part);
        } catch (const std::exception&) {
          throw ContractError("override '" + ov + "': '" + part + "' is not an index");
        }
        if (idx >= node->size()) throw ContractError("override '" + ov + "': index out of range");
        node = &(*node)[idx];
      } else {
        node = &(*node)[part];
      }
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = value;
  }
}

ExperimentConfig load_experiment_config(const fs::path& path, const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) throw IoError("config file not found: " + path.string());
  json j = read_json_file(path);
  apply_overrides(j, overrides);
  return experiment_from_json(j);
}

std::string config_digest(const ExperimentConfig& config) { return digest_bytes(to_json(config).dump()); }

// ---- logs and tables -----------------------------------------------------

json to_json(const RoundRecord& r, const ClassCatalog& catalog) {
  return {{"format_version", kFormatVersion},
          {"round", r.round_index},
          {"regime", r.regime},
          {"data_strategy", std::string(to_string(r.data_strategy))},
          {"freeze_shared", r.freeze_shared},
          {"status", r.status},
          {"selected", r.selected_scan_ids},
          {"reused", r.reused_scan_ids},
          {"classes_revised", class_names(r.classes_revised, catalog)},
          {"dsc_before", dsc_map(r.dsc_before, catalog)},
          {"dsc_after", dsc_map(r.dsc_after, catalog)},
          {"pool_size", r.pool_size},
          {"scans_processed_per_epoch", r.scans_processed_per_epoch},
          {"train_seconds_per_epoch", r.train_seconds_per_epoch},
          {"wall_time_seconds", r.wall_time_seconds},
          {"timestamp", r.timestamp_seconds},
          {"checkpoint", r.checkpoint}};
}

json to_json(const EpochRecord& e, const ClassCatalog& catalog) {
  return {{"epoch", e.epoch},
          {"mean_loss", e.mean_loss},
          {"lr", e.lr},
          {"validation_dsc", dsc_map(e.validation_dsc, catalog)},
          {"wall_time_seconds", e.wall_time_seconds},
          {"scans_processed", e.scans_processed}};
}

std::string render_scores_csv(const std::vector<ScanScore>& scores) {
  std::string out = std::string("# format_version: ") + kFormatVersion + "\nscan_id,u,c,o,importance\n";
  for (const auto& s : scores) {
    out += s.scan_id + "," + format_double(s.u) + "," + format_double(s.c) + "," + format_double(s.o) + "," +
           format_double(s.importance) + "\n";
  }
  return out;
}

std::string render_round_scores(const std::vector<RoundRecord>& records) {
  std::string out = std::string("# format_version: ") + kFormatVersion + "\nregime,round,scan_id,u,c,o,importance\n";
  for (const auto& r : records) {
    for (const auto& s : r.scores) {
      out += r.regime + "," + std::to_string(r.round_index) + "," + s.scan_id + "," + format_double(s.u) + "," +
             format_double(s.c) + "," + format_double(s.o) + "," + format_double(s.importance) + "\n";
    }
  }
  return out;
}

ScoreTable read_scores_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<std::string> header;
  ScoreTable table;
  bool versioned = false;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.starts_with("#")) {
      const std::string key = "# format_version:";
      if (line.starts_with(key)) {
        std::string v = line.substr(key.size());
        v.erase(0, v.find_first_not_of(' '));
        check_format_version(v, path.string());
        versioned = true;
      }
      continue;
    }
    if (header.empty()) {
      header = split(line);
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                    " columns");
    }
    ScanScore s;
    std::optional<std::string> regime;
    std::optional<int> round;
    try {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& h = header[i];
        if (h == "scan_id") s.scan_id = cells[i];
        else if (h == "u") s.u = std::stod(cells[i]);
        else if (h == "c") s.c = std::stod(cells[i]);
        else if (h == "o") s.o = std::stod(cells[i]);
        else if (h == "importance") s.importance = std::stod(cells[i]);
        else if (h == "regime") regime = cells[i];
        else if (h == "round") round = std::stoi(cells[i]);
      }
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": unparsable number");
    }
    table.scores.push_back(s);
    if (regime) table.regime.push_back(*regime);
    if (round) table.round.push_back(*round);
  }
  if (!versioned) throw IoError(path.string() + ": missing format_version line");
  if (std::find(header.begin(), header.end(), "scan_id") == header.end() ||
      std::find(header.begin(), header.end(), "importance") == header.end()) {
    throw IoError(path.string() + ": needs scan_id and importance columns");
  }
  return table;
}

std::string read_text_file(const fs::path& path) { return read_bytes(path); }

void write_text_file(const fs::path& path, const std::string& text) { write_bytes(path, text); }

// ---- run directory -------------------------------------------------------

RunDirectory::RunDirectory(fs::path dir, ClassCatalog catalog) : dir_(std::move(dir)), catalog_(std::move(catalog)) {
  fs::create_directories(dir_);
  const fs::path lock = dir_ / "run.lock";
  // "x" mode fails when the file exists, giving an exclusive create.
  std::FILE* f = std::fopen(lock.c_str(), "wx");
  if (!f) {
    if (errno == EEXIST) throw IoError(dir_.string() + " is locked by another writer (remove run.lock if stale)");
    throw IoError("cannot create " + lock.string());
  }
  std::fclose(f);
  write_text_file(dir_ / "rounds.jsonl", "");
  write_text_file(dir_ / "history.jsonl", "");
}

RunDirectory::~RunDirectory() {
  std::error_code ec;
  fs::remove(dir_ / "run.lock", ec);
}

namespace {
void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << line << "\n";
}
}  // namespace

void RunDirectory::append_round(const RoundRecord& record) {
  append_line(dir_ / "rounds.jsonl", to_json(record, catalog_).dump());
}

void RunDirectory::append_history(const std::string& run, int round, const TrainHistory& history) {
  for (const auto& e : history.epochs) {
    json j = to_json(e, catalog_);
    j["format_version"] = kFormatVersion;
    j["run"] = run;
    j["round"] = round;
    j["timestamp"] = monotonic_seconds();
    append_line(dir_ / "history.jsonl", j.dump());
  }
}

}  // namespace ctune
