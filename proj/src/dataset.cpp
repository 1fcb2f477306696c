#include "nodule/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nodule/error.hpp"

namespace nodule {

namespace {

constexpr const char* kManifestHeader =
    "id,volume_path,cx,cy,cz,r1,r2,r3,r4,"
    "calcification,spiculation,lobulation,margin,sphericity,texture";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

int parse_int(const std::string& cell, std::size_t line_no, const char* what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size()) {
    throw DataError("manifest line " + std::to_string(line_no) + ": bad " + what + " '" +
                    cell + "'");
  }
  return v;
}

double parse_double(const std::string& cell, std::size_t line_no, const char* what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size()) {
    throw DataError("manifest line " + std::to_string(line_no) + ": bad " + what + " '" +
                    cell + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<NoduleRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest not found: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest is empty: " + path);
  if (split_csv_line(line) != split_csv_line(kManifestHeader)) {
    throw DataError("manifest line 1: unexpected header in " + path);
  }

  std::vector<NoduleRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 15) {
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 15 cells, got " +
                      std::to_string(cells.size()));
    }
    NoduleRecord rec;
    rec.id = cells[0];
    rec.volume_path = cells[1];
    if (rec.id.empty()) {
      throw DataError("manifest line " + std::to_string(line_no) + ": empty id");
    }
    for (int i = 0; i < 3; ++i) rec.center[i] = parse_int(cells[2 + i], line_no, "center");
    for (int i = 0; i < 4; ++i) {
      const std::string& cell = cells[5 + i];
      if (cell.empty()) continue;
      const int r = parse_int(cell, line_no, "rating");
      if (r < 1 || r > 5) {
        throw DataError("manifest line " + std::to_string(line_no) + ": rating " +
                        std::to_string(r) + " outside [1,5]");
      }
      rec.malignancy_ratings.push_back(r);
    }
    for (int i = 0; i < 6; ++i) {
      const std::string& cell = cells[9 + i];
      if (cell.empty()) continue;
      const double a = parse_double(cell, line_no, kAttributeNames[i]);
      if (!(a >= 1.0 && a <= 5.0)) {
        throw DataError("manifest line " + std::to_string(line_no) + ": " + kAttributeNames[i] +
                        " " + format_double(a) + " outside [1,5]");
      }
      rec.attributes[i] = a;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_manifest(const std::vector<NoduleRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot open manifest for writing: " + path);
  out << kManifestHeader << "\n";
  for (const auto& rec : records) {
    out << rec.id << "," << rec.volume_path << "," << rec.center[0] << "," << rec.center[1]
        << "," << rec.center[2];
    for (int i = 0; i < 4; ++i) {
      out << ",";
      if (i < static_cast<int>(rec.malignancy_ratings.size())) out << rec.malignancy_ratings[i];
    }
    for (int i = 0; i < 6; ++i) {
      out << ",";
      if (rec.attributes[i]) out << format_double(*rec.attributes[i]);
    }
    out << "\n";
  }
  if (!out) throw DataError("short manifest write: " + path);
}

ConsensusResult consensus_label(const std::vector<NoduleRecord>& records) {
  ConsensusResult result;
  for (const auto& rec : records) {
    const std::size_t count = rec.malignancy_ratings.size();
    if (count < 3) {
      ++result.dropped_few_raters;
      continue;
    }
    long sum = 0;
    for (int r : rec.malignancy_ratings) sum += r;
    if (sum == 3L * static_cast<long>(count)) {  // exact "average equals 3"
      ++result.dropped_score_three;
      continue;
    }
    LabeledSample s;
    s.id = rec.id;
    s.volume_path = rec.volume_path;
    s.center = rec.center;
    s.consensus_score = static_cast<double>(sum) / static_cast<double>(count);
    s.label = s.consensus_score < 3.0 ? NoduleClass::Benign : NoduleClass::Malignant;
    s.attributes = rec.attributes;
    result.samples.push_back(std::move(s));
  }
  return result;
}

FoldPlan make_folds(const std::vector<LabeledSample>& samples, int k, std::uint64_t seed) {
  if (k < 2) throw DataError("folds: k must be >= 2");
  if (static_cast<std::size_t>(k) > samples.size()) {
    throw DataError("folds: k = " + std::to_string(k) + " exceeds sample count " +
                    std::to_string(samples.size()));
  }
  std::array<std::vector<std::string>, 2> by_class;
  for (const auto& s : samples) {
    by_class[static_cast<std::size_t>(s.label)].push_back(s.id);
  }
  FoldPlan plan;
  plan.seed = seed;
  plan.folds.assign(static_cast<std::size_t>(k), {});
  std::size_t cursor = 0;  // shared across classes so fold sizes differ by <= 1
  for (std::size_t cls = 0; cls < 2; ++cls) {
    Rng rng(derive_seed(seed, 0x666f6c64, cls));
    rng.shuffle(by_class[cls]);
    for (auto& id : by_class[cls]) {
      plan.folds[cursor % static_cast<std::size_t>(k)].push_back(std::move(id));
      ++cursor;
    }
  }
  return plan;
}

std::vector<std::string> balance(const std::vector<LabeledSample>& pool, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    by_class[static_cast<std::size_t>(pool[i].label)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw DataError("balance: both classes must be present");
  }
  const std::size_t target = std::min(by_class[0].size(), by_class[1].size());
  std::vector<bool> keep(pool.size(), false);
  for (auto& cls : by_class) {
    if (cls.size() > target) {
      Rng rng(derive_seed(seed, 0x62616c616e6365));
      rng.shuffle(cls);
      cls.resize(target);
    }
    for (std::size_t i : cls) keep[i] = true;
  }
  std::vector<std::string> out;
  out.reserve(2 * target);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (keep[i]) out.push_back(pool[i].id);
  }
  return out;
}

std::array<double, 6> attribute_vector(const LabeledSample& sample) {
  std::array<double, 6> out{};
  for (int i = 0; i < 6; ++i) {
    if (!sample.attributes[i]) {
      throw DataError("sample " + sample.id + ": missing attribute " + kAttributeNames[i]);
    }
    out[i] = *sample.attributes[i];
  }
  return out;
}

double latent_score(const std::array<double, 6>& attributes) {
  auto z = [](double a) { return (a - 3.0) / 2.0; };
  return 3.0 + 0.6 * z(attributes[1])   // spiculation
         + 0.5 * z(attributes[2])       // lobulation
         + 0.2 * z(attributes[5])       // texture
         - 0.4 * z(attributes[0])       // calcification
         - 0.3 * z(attributes[3])       // margin
         - 0.3 * z(attributes[4]);      // sphericity
}

NoduleParams draw_nodule_params(Rng& rng, double latent_noise_std, double rater_noise_std) {
  NoduleParams p;
  for (auto& a : p.attributes) a = rng.uniform(1.0, 5.0);
  const double m = latent_score(p.attributes) + rng.normal(0.0, latent_noise_std);
  p.latent_malignancy = std::clamp(m, 1.0, 5.0);
  for (auto& r : p.ratings) {
    const double noisy = p.latent_malignancy + rng.normal(0.0, rater_noise_std);
    r = static_cast<int>(std::clamp(std::lround(noisy), 1L, 5L));
  }
  return p;
}

Volume render_phantom(const std::array<double, 6>& attributes, int side, Rng& rng) {
  if (side < 3 || side % 2 == 0) {
    throw DataError("phantom side must be odd and >= 3, got " + std::to_string(side));
  }
  auto norm = [](double a) { return (a - 1.0) / 4.0; };  // [1,5] -> [0,1]
  const double calc_n = norm(attributes[0]);
  const double spic_n = norm(attributes[1]);
  const double lob_n = norm(attributes[2]);
  const double marg_n = norm(attributes[3]);
  const double sph_n = norm(attributes[4]);
  const double tex_n = norm(attributes[5]);

  const double c = (side - 1) / 2.0;
  const double base_r = 0.22 * side;
  const double elong = 0.6 * (1.0 - sph_n);
  double rx = base_r * (1.0 + elong) * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
  double ry = base_r * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));
  double rz = base_r / (1.0 + elong) * (1.0 + 0.1 * rng.uniform(-1.0, 1.0));

  const double lob_amp = 0.25 * lob_n;
  const double spic_amp = 0.5 * spic_n;
  const double phase1 = rng.uniform(0.0, 6.283185307179586);
  const double phase2 = rng.uniform(0.0, 6.283185307179586);
  const double phase3 = rng.uniform(0.0, 6.283185307179586);
  const double phase4 = rng.uniform(0.0, 6.283185307179586);

  const double core = 0.55 + 0.45 * tex_n;
  const double edge_k = 3.0 + 14.0 * marg_n;
  const double tex_sigma = 0.25 * (1.0 - tex_n);

  // calcification speckles: bright gaussian blobs inside the core
  struct Spot {
    double x, y, z, r2, amp;
  };
  std::vector<Spot> spots;
  const long n_spots = std::lround(5.0 * calc_n);
  for (long i = 0; i < n_spots; ++i) {
    Spot s;
    s.x = c + 0.5 * base_r * rng.uniform(-1.0, 1.0);
    s.y = c + 0.5 * base_r * rng.uniform(-1.0, 1.0);
    s.z = c + 0.5 * base_r * rng.uniform(-1.0, 1.0);
    const double radius = (0.03 + 0.02 * rng.uniform()) * side;
    s.r2 = radius * radius;
    s.amp = 1.2;
    spots.push_back(s);
  }

  Volume vol(side, side, side);
  vol.spacing = {0.5, 0.5, 0.5};
  for (int z = 0; z < side; ++z) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double dx = x - c, dy = y - c, dz = z - c;
        const double rho = std::sqrt((dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) +
                                     (dz * dz) / (rz * rz));
        const double theta = std::atan2(dy, dx);
        const double phi = std::atan2(dz, std::sqrt(dx * dx + dy * dy));

        double rho_eff = rho;
        if (lob_amp > 0.0) {
          rho_eff /= 1.0 + lob_amp * std::sin(2.0 * theta + phase1) * std::sin(3.0 * phi + phase2);
        }
        if (spic_amp > 0.0) {
          const double lobe = std::max(0.0, std::cos(6.0 * theta + phase3) *
                                                std::cos(6.0 * phi + phase4));
          rho_eff /= 1.0 + spic_amp * lobe * lobe * lobe;
        }

        const double inside = 1.0 / (1.0 + std::exp(edge_k * (rho_eff - 1.0)));
        const double tex_noise = rng.normal(0.0, tex_sigma);  // drawn per voxel
        double v = core * inside * (1.0 + tex_noise * inside);

        for (const auto& s : spots) {
          const double sx = x - s.x, sy = y - s.y, sz = z - s.z;
          v += s.amp * std::exp(-(sx * sx + sy * sy + sz * sz) / (2.0 * s.r2));
        }
        v += rng.normal(0.0, 0.02);  // acquisition noise
        vol.at(x, y, z) = v;
      }
    }
  }
  return vol;
}

std::string synth_generate(const SynthConfig& cfg) {
  if (cfg.count < 1) throw DataError("synth: count must be >= 1");
  if (cfg.side < 3 || cfg.side % 2 == 0) {
    throw DataError("synth: side must be odd and >= 3");
  }
  if (cfg.out_dir.empty()) throw DataError("synth: output directory required");
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("synth: cannot create output directory " + cfg.out_dir);

  std::vector<NoduleRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.count));
  const int center = (cfg.side - 1) / 2;
  for (int i = 0; i < cfg.count; ++i) {
    Rng rng(derive_seed(cfg.seed, 0x73796e7468, static_cast<std::uint64_t>(i)));
    const NoduleParams params =
        draw_nodule_params(rng, cfg.latent_noise_std, cfg.rater_noise_std);
    const Volume vol = render_phantom(params.attributes, cfg.side, rng);

    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "n%05d", i);
    NoduleRecord rec;
    rec.id = idbuf;
    rec.volume_path = rec.id + ".rvol";
    rec.center = {center, center, center};
    rec.malignancy_ratings.assign(params.ratings.begin(), params.ratings.end());
    for (int a = 0; a < 6; ++a) rec.attributes[a] = params.attributes[a];
    save_volume(vol, (std::filesystem::path(cfg.out_dir) / rec.volume_path).string());
    records.push_back(std::move(rec));
  }
  const std::string manifest_path =
      (std::filesystem::path(cfg.out_dir) / "manifest.csv").string();
  save_manifest(records, manifest_path);
  return manifest_path;
}

}  // namespace nodule
