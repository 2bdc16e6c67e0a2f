#include "mi/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mi/errors.hpp"

namespace mi {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'E', 'G', 'T'};

std::size_t payload_count(const Payload& p) {
  std::size_t n = 1;
  for (std::int64_t d : p.shape) {
    if (d <= 0) fail(Errc::malformed_header, "payload dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return p.shape.empty() ? 0 : n;
}

}  // namespace

void write_container(const std::string& path, const Container& c) {
  nlohmann::json header = c.meta;
  nlohmann::json payloads = nlohmann::json::array();
  for (const Payload& p : c.payloads) {
    if (p.data.size() != payload_count(p)) {
      fail(Errc::shape_mismatch, "payload '" + p.name +
                                     "' data does not match its shape");
    }
    payloads.push_back({{"name", p.name}, {"dtype", "f64"}, {"shape", p.shape}});
  }
  header["payloads"] = payloads;
  const std::string header_bytes = header.dump();
  if (header_bytes.size() > 0xffffffffULL) {
    fail(Errc::io_error, "container header too large");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  const std::uint16_t version = kContainerVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint32_t hlen = static_cast<std::uint32_t>(header_bytes.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const Payload& p : c.payloads) {
    out.write(reinterpret_cast<const char*>(p.data.data()),
              static_cast<std::streamsize>(p.data.size() * sizeof(double)));
  }
  out.flush();
  if (!out) fail(Errc::io_error, "short write to '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open '" + path + "' for reading");

  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    fail(Errc::bad_magic, "'" + path + "' is not an EEGT container");
  }
  std::uint16_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (in.gcount() != sizeof(version)) {
    fail(Errc::malformed_header, "'" + path + "' ends inside the version field");
  }
  if (version != kContainerVersion) {
    fail(Errc::version_unsupported, "container version " +
                                        std::to_string(version) +
                                        " is not supported (expected 1)");
  }
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (in.gcount() != sizeof(hlen)) {
    fail(Errc::malformed_header, "'" + path + "' ends inside the header length");
  }
  std::string header_bytes(hlen, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(hlen));
  if (in.gcount() != static_cast<std::streamsize>(hlen)) {
    fail(Errc::malformed_header, "'" + path + "' header is truncated");
  }

  nlohmann::json header = nlohmann::json::parse(header_bytes, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    fail(Errc::malformed_header, "'" + path + "' header is not valid JSON");
  }
  if (!header.contains("payloads") || !header["payloads"].is_array()) {
    fail(Errc::malformed_header, "'" + path + "' header lacks a payloads array");
  }

  Container c;
  for (const auto& entry : header["payloads"]) {
    if (!entry.is_object() || !entry.contains("name") || !entry.contains("dtype") ||
        !entry.contains("shape") || !entry["name"].is_string() ||
        !entry["shape"].is_array()) {
      fail(Errc::malformed_header, "'" + path + "' payload entry is malformed");
    }
    if (entry["dtype"] != "f64") {
      fail(Errc::malformed_header,
           "'" + path + "' payload dtype must be f64, got " +
               entry["dtype"].dump());
    }
    Payload p;
    p.name = entry["name"].get<std::string>();
    for (const auto& d : entry["shape"]) {
      if (!d.is_number_integer()) {
        fail(Errc::malformed_header, "payload shape entries must be integers");
      }
      p.shape.push_back(d.get<std::int64_t>());
    }
    p.data.resize(payload_count(p));
    c.payloads.push_back(std::move(p));
  }
  header.erase("payloads");
  c.meta = std::move(header);

  for (Payload& p : c.payloads) {
    const std::size_t bytes = p.data.size() * sizeof(double);
    in.read(reinterpret_cast<char*>(p.data.data()),
            static_cast<std::streamsize>(bytes));
    if (in.gcount() != static_cast<std::streamsize>(bytes)) {
      fail(Errc::truncated_payload,
           "'" + path + "' payload '" + p.name + "' needs " +
               std::to_string(bytes) + " bytes but the file ends early");
    }
  }
  // Exact size contract: no trailing bytes after the declared payloads.
  in.peek();
  if (!in.eof()) {
    fail(Errc::malformed_header, "'" + path + "' has trailing bytes after payloads");
  }
  return c;
}

void write_recording(const std::string& path, const RawRecording& rec) {
  if (rec.channels() < 1 || rec.n_samples() < 1) {
    fail(Errc::shape_mismatch, "recording has no samples");
  }
  if (static_cast<int>(rec.channel_labels.size()) != rec.channels()) {
    fail(Errc::shape_mismatch, "channel label count does not match channels");
  }
  Container c;
  c.meta["kind"] = "recording";
  c.meta["fs"] = rec.fs;
  c.meta["channel_labels"] = rec.channel_labels;
  nlohmann::json events = nlohmann::json::array();
  for (const CueEvent& ev : rec.events) {
    events.push_back({{"onset_sample", ev.onset_sample},
                      {"label", class_label_name(ev.label)}});
  }
  c.meta["events"] = events;

  Payload samples;
  samples.name = "samples";
  samples.shape = {rec.channels(), rec.n_samples()};
  samples.data.resize(static_cast<std::size_t>(rec.samples.size()));
  // Row-major [C, N] on disk; Eigen stores column-major.
  for (int ch = 0; ch < rec.channels(); ++ch) {
    for (std::int64_t t = 0; t < rec.n_samples(); ++t) {
      samples.data[static_cast<std::size_t>(ch) * rec.n_samples() + t] =
          rec.samples(ch, t);
    }
  }
  c.payloads.push_back(std::move(samples));
  write_container(path, c);
}

RawRecording read_recording(const std::string& path) {
  Container c = read_container(path);
  if (!c.meta.contains("kind") || c.meta["kind"] != "recording") {
    fail(Errc::malformed_header, "'" + path + "' is not a recording container");
  }
  if (!c.meta.contains("fs") || !c.meta["fs"].is_number()) {
    fail(Errc::malformed_header, "'" + path + "' lacks a numeric fs");
  }
  RawRecording rec;
  rec.fs = c.meta["fs"].get<double>();
  if (!(rec.fs > 0.0)) {
    fail(Errc::malformed_header, "'" + path + "' has non-positive fs");
  }
  if (!c.meta.contains("channel_labels") || !c.meta["channel_labels"].is_array()) {
    fail(Errc::malformed_header, "'" + path + "' lacks channel labels");
  }
  for (const auto& l : c.meta["channel_labels"]) {
    if (!l.is_string()) {
      fail(Errc::malformed_header, "channel labels must be strings");
    }
    rec.channel_labels.push_back(l.get<std::string>());
  }
  if (c.meta.contains("events")) {
    if (!c.meta["events"].is_array()) {
      fail(Errc::malformed_header, "events must be an array");
    }
    std::int64_t prev_onset = -1;
    for (const auto& e : c.meta["events"]) {
      if (!e.is_object() || !e.contains("onset_sample") || !e.contains("label") ||
          !e["onset_sample"].is_number_integer() || !e["label"].is_string()) {
        fail(Errc::malformed_header, "event entries need onset_sample and label");
      }
      CueEvent ev;
      ev.onset_sample = e["onset_sample"].get<std::int64_t>();
      ev.label = class_label_from_string(e["label"].get<std::string>());
      if (ev.onset_sample < prev_onset) {
        fail(Errc::malformed_header, "events must be sorted by onset");
      }
      prev_onset = ev.onset_sample;
      rec.events.push_back(ev);
    }
  }

  const Payload* samples = nullptr;
  for (const Payload& p : c.payloads) {
    if (p.name == "samples") samples = &p;
  }
  if (samples == nullptr || samples->shape.size() != 2) {
    fail(Errc::malformed_header, "'" + path + "' lacks a [C, N] samples payload");
  }
  const std::int64_t channels = samples->shape[0];
  const std::int64_t n = samples->shape[1];
  if (static_cast<std::size_t>(channels) != rec.channel_labels.size()) {
    fail(Errc::malformed_header, "channel label count disagrees with samples shape");
  }
  rec.samples.resize(channels, n);
  for (std::int64_t ch = 0; ch < channels; ++ch) {
    for (std::int64_t t = 0; t < n; ++t) {
      rec.samples(ch, t) = samples->data[static_cast<std::size_t>(ch) * n + t];
    }
  }
  return rec;
}

void write_feature_tensor(const std::string& path, const FeatureTensor& t) {
  const int channels = t.channels();
  const int bands = t.bands();
  if (channels < 1 || bands < 1) {
    fail(Errc::shape_mismatch, "feature tensor is empty");
  }
  for (const Eigen::MatrixXd& s : t.slices) {
    if (s.rows() != channels || s.cols() != channels) {
      fail(Errc::shape_mismatch, "feature tensor slices must all be C x C");
    }
  }
  Container c;
  c.meta["kind"] = "feature_tensor";
  c.meta["trial_id"] = t.trial_id;
  c.meta["label"] = class_label_name(t.label);

  Payload p;
  p.name = "nscm";
  p.shape = {channels, channels, bands};
  p.data.resize(static_cast<std::size_t>(channels) * channels * bands);
  for (int i = 0; i < channels; ++i) {
    for (int j = 0; j < channels; ++j) {
      for (int b = 0; b < bands; ++b) {
        p.data[(static_cast<std::size_t>(i) * channels + j) * bands + b] =
            t.slices[static_cast<std::size_t>(b)](i, j);
      }
    }
  }
  c.payloads.push_back(std::move(p));
  write_container(path, c);
}

FeatureTensor read_feature_tensor(const std::string& path) {
  Container c = read_container(path);
  if (!c.meta.contains("kind") || c.meta["kind"] != "feature_tensor") {
    fail(Errc::malformed_header, "'" + path + "' is not a feature tensor container");
  }
  FeatureTensor t;
  if (c.meta.contains("trial_id") && c.meta["trial_id"].is_number_integer()) {
    t.trial_id = c.meta["trial_id"].get<int>();
  }
  if (c.meta.contains("label") && c.meta["label"].is_string()) {
    t.label = class_label_from_string(c.meta["label"].get<std::string>());
  }
  const Payload* nscm_payload = nullptr;
  for (const Payload& p : c.payloads) {
    if (p.name == "nscm") nscm_payload = &p;
  }
  if (nscm_payload == nullptr || nscm_payload->shape.size() != 3 ||
      nscm_payload->shape[0] != nscm_payload->shape[1]) {
    fail(Errc::malformed_header, "'" + path + "' lacks a [C, C, T] nscm payload");
  }
  const std::int64_t channels = nscm_payload->shape[0];
  const std::int64_t bands = nscm_payload->shape[2];
  t.slices.assign(static_cast<std::size_t>(bands),
                  Eigen::MatrixXd::Zero(channels, channels));
  for (std::int64_t i = 0; i < channels; ++i) {
    for (std::int64_t j = 0; j < channels; ++j) {
      for (std::int64_t b = 0; b < bands; ++b) {
        t.slices[static_cast<std::size_t>(b)](i, j) =
            nscm_payload->data[(static_cast<std::size_t>(i) * channels + j) * bands +
                               b];
      }
    }
  }
  return t;
}

}  // namespace mi
