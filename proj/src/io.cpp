#include "ocdl/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "ocdl/error.hpp"
#include "ocdl/prox.hpp"

namespace ocdl::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "TensorFile I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'M', 'D', 'T', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  Reader(std::istream& is, const std::string& name) : is_(is), name_(name) {}

  template <class T>
  T get(const char* what) {
    T v{};
    if (!is_.read(reinterpret_cast<char*>(&v), sizeof v))
      fail(ErrorCode::IoError, name_ + ": truncated " + what + " at offset " + std::to_string(offset_));
    offset_ += sizeof v;
    return v;
  }
  void bytes(char* dst, std::size_t n, const char* what) {
    if (!is_.read(dst, static_cast<std::streamsize>(n)))
      fail(ErrorCode::IoError, name_ + ": truncated " + what + " at offset " + std::to_string(offset_));
    offset_ += n;
  }
  std::size_t offset() const { return offset_; }
  const std::string& name() const { return name_; }

 private:
  std::istream& is_;
  std::string name_;
  std::size_t offset_ = 0;
};

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t, Precision precision) {
  require(t.dims.size() <= kMaxRank, ErrorCode::InvalidArgument, "tensor rank exceeds 6");
  require(t.values.size() == t.element_count(), ErrorCode::DimensionMismatch, "tensor payload does not match dims");
  os.write(kMagic.data(), kMagic.size());
  put(os, static_cast<std::uint32_t>(precision));
  put(os, static_cast<std::uint32_t>(t.dims.size()));
  for (std::size_t d : t.dims) {
    require(d <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::InvalidArgument, "tensor dim too large");
    put(os, static_cast<std::uint32_t>(d));
  }
  if (precision == Precision::Float32) {
    for (double v : t.values) put(os, static_cast<float>(v));
  } else {
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!os) fail(ErrorCode::IoError, "tensor write failed");
}

Tensor read_tensor(std::istream& is, const std::string& name) {
  Reader in(is, name);
  std::array<char, 4> magic{};
  in.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) fail(ErrorCode::IoError, name + ": bad magic at offset 0 (expected MDT1)");
  const std::size_t version_at = in.offset();
  const auto version = in.get<std::uint32_t>("version");
  if (version != 1 && version != 2)
    fail(ErrorCode::IoError,
         name + ": unsupported version " + std::to_string(version) + " at offset " + std::to_string(version_at));
  const std::size_t rank_at = in.offset();
  const auto rank = in.get<std::uint32_t>("rank");
  if (rank > kMaxRank)
    fail(ErrorCode::IoError, name + ": rank " + std::to_string(rank) + " > 6 at offset " + std::to_string(rank_at));
  Tensor t;
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(in.get<std::uint32_t>("dims"));
  t.values.resize(t.element_count());
  if (version == 1) {
    std::vector<float> raw(t.values.size());
    in.bytes(reinterpret_cast<char*>(raw.data()), raw.size() * sizeof(float), "payload");
    for (std::size_t i = 0; i < raw.size(); ++i) t.values[i] = raw[i];
  } else {
    in.bytes(reinterpret_cast<char*>(t.values.data()), t.values.size() * sizeof(double), "payload");
  }
  return t;
}

void atomic_write(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail(ErrorCode::IoError, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoError, "cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_tensor(const fs::path& path, const Tensor& t, Precision precision) {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t, precision);
  atomic_write(path, os.str());
}

Tensor load_tensor(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path.string());
  return read_tensor(is, path.string());
}

Tensor to_tensor(const ImageStack& stack) {
  Tensor t;
  const Extent e = stack.extent();
  t.dims = {stack.modalities(), e.rows, e.cols};
  t.values.reserve(t.element_count());
  for (const Image& im : stack) t.values.insert(t.values.end(), im.values().begin(), im.values().end());
  return t;
}

ImageStack stack_from_tensor(const Tensor& t) {
  require(t.dims.size() == 3, ErrorCode::DimensionMismatch, "expected a rank-3 tensor [L,n1,n2]");
  const Extent e{t.dims[1], t.dims[2]};
  std::vector<Image> images;
  for (std::size_t l = 0; l < t.dims[0]; ++l) {
    auto first = t.values.begin() + static_cast<std::ptrdiff_t>(l * e.size());
    images.emplace_back(e, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(e.size())));
  }
  return ImageStack(std::move(images));
}

Tensor to_tensor(const ImageBank& bank) {
  Tensor t;
  const Extent e = bank.extent();
  t.dims = {bank.modalities(), bank.atoms(), e.rows, e.cols};
  t.values.reserve(t.element_count());
  for (std::size_t l = 0; l < bank.modalities(); ++l)
    for (const Image& im : bank.slice(l)) t.values.insert(t.values.end(), im.values().begin(), im.values().end());
  return t;
}

namespace {

template <class Bank>
Bank bank_from_tensor(const Tensor& t) {
  require(t.dims.size() == 4, ErrorCode::DimensionMismatch, "expected a rank-4 tensor [L,K,p1,p2]");
  const Extent e{t.dims[2], t.dims[3]};
  Bank bank(t.dims[0], t.dims[1], e);
  auto it = t.values.begin();
  for (std::size_t l = 0; l < bank.modalities(); ++l)
    for (std::size_t k = 0; k < bank.atoms(); ++k) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(e.size()), bank.at(l, k).data());
      it += static_cast<std::ptrdiff_t>(e.size());
    }
  return bank;
}

}  // namespace

Dictionary dictionary_from_tensor(const Tensor& t) { return bank_from_tensor<Dictionary>(t); }

Dictionary load_dictionary(const fs::path& path) {
  Dictionary dict = dictionary_from_tensor(load_tensor(path));
  for (std::size_t l = 0; l < dict.modalities(); ++l)
    for (std::size_t k = 0; k < dict.atoms(); ++k) {
      Image& d = dict.at(l, k);
      const double n = norm(d);
      require(n <= 1.0 + kRoundingSlack, ErrorCode::KernelNormViolation,
              path.string() + ": kernel (" + std::to_string(l) + "," + std::to_string(k) + ") has norm " +
                  std::to_string(n));
      if (n > 1.0) d = prox::project_unit_ball(d);
    }
  return dict;
}

Tensor image_to_tensor(const Image& im) {
  return Tensor{{im.rows(), im.cols()}, std::vector<double>(im.values().begin(), im.values().end())};
}

Image image_from_tensor(const Tensor& t) {
  require(t.dims.size() == 2, ErrorCode::DimensionMismatch, "expected a rank-2 tensor [n1,n2]");
  return Image(Extent{t.dims[0], t.dims[1]}, t.values);
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  const MemoryState& mem = ckpt.memory;
  std::ostringstream os(std::ios::binary);
  write_tensor(os, Tensor{{3}, {static_cast<double>(ckpt.round), static_cast<double>(mem.t), mem.gamma}},
               Precision::Float64);
  write_tensor(os, to_tensor(ckpt.dict), Precision::Float64);
  write_tensor(os, to_tensor(mem.b), Precision::Float64);

  const std::size_t L = mem.modalities(), K = mem.atoms();
  const Extent lag = L > 0 ? mem.c.front().lag_extent() : Extent{};
  Tensor c;
  c.dims = {L, K, K, lag.rows, lag.cols};
  c.values.reserve(c.element_count());
  for (const auto& ck : mem.c)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t kp = 0; kp < K; ++kp) {
        const auto v = ck.at(k, kp).values();
        c.values.insert(c.values.end(), v.begin(), v.end());
      }
  write_tensor(os, c, Precision::Float64);
  atomic_write(path, os.str());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path.string());
  const std::string name = path.string();
  const Tensor meta = read_tensor(is, name);
  const Tensor dict = read_tensor(is, name);
  const Tensor b = read_tensor(is, name);
  const Tensor c = read_tensor(is, name);
  require(meta.values.size() == 3, ErrorCode::IoError, name + ": bad checkpoint header");
  require(c.dims.size() == 5, ErrorCode::IoError, name + ": bad cross-kernel tensor");

  Checkpoint ckpt;
  ckpt.round = static_cast<std::int64_t>(meta.values[0]);
  ckpt.dict = dictionary_from_tensor(dict);
  MemoryState& mem = ckpt.memory;
  mem.t = static_cast<std::int64_t>(meta.values[1]);
  mem.gamma = meta.values[2];
  mem.b = bank_from_tensor<ImageBank>(b);
  const std::size_t L = c.dims[0], K = c.dims[1];
  require(L == mem.b.modalities() && K == mem.b.atoms() && c.dims[2] == K, ErrorCode::IoError,
          name + ": memory tensors disagree");
  const Extent kernel = mem.b.extent();
  require(c.dims[3] == 2 * kernel.rows - 1 && c.dims[4] == 2 * kernel.cols - 1, ErrorCode::IoError,
          name + ": cross-kernel extent disagrees with kernel extent");
  auto it = c.values.begin();
  for (std::size_t l = 0; l < L; ++l) {
    conv::CrossKernels ck(K, kernel);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t kp = 0; kp < K; ++kp) {
        Image& im = ck.at(k, kp);
        std::copy(it, it + static_cast<std::ptrdiff_t>(im.size()), im.data());
        it += static_cast<std::ptrdiff_t>(im.size());
      }
    mem.c.push_back(std::move(ck));
  }
  return ckpt;
}

void write_pgm_preview(const fs::path& path, const Image& im) {
  double lo = 0.0, hi = 0.0;
  if (!im.empty()) {
    lo = hi = im.values()[0];
    for (double v : im.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double span = hi - lo;
  std::string out = "P5\n" + std::to_string(im.cols()) + " " + std::to_string(im.rows()) + "\n255\n";
  for (double v : im.values()) {
    const double u = span > 0.0 ? (v - lo) / span : 0.0;
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0))));
  }
  atomic_write(path, out);
  fs::path side = path;
  side += ".scale";
  atomic_write(side, "min = " + format_double(lo) + "\nmax = " + format_double(hi) + "\n");
}

PgmImage read_pgm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  auto number = [&](const char* what) {
    const std::string s = token();
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
      fail(ErrorCode::IoError, path.string() + ": bad PGM " + what);
    return v;
  };
  if (token() != "P5") fail(ErrorCode::IoError, path.string() + ": not a P5 PGM");
  PgmImage pgm;
  pgm.width = number("width");
  pgm.height = number("height");
  pgm.maxval = static_cast<int>(number("maxval"));
  if (pgm.maxval <= 0 || pgm.maxval > 255) fail(ErrorCode::IoError, path.string() + ": unsupported maxval");
  ++pos;  // single whitespace before raster
  const std::size_t n = pgm.width * pgm.height;
  if (bytes.size() < pos + n) fail(ErrorCode::IoError, path.string() + ": truncated PGM raster");
  pgm.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return pgm;
}

// ---- configuration ----

namespace {

struct Key {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& v) { throw std::invalid_argument(v); }

template <class T>
T parse_number(const std::string& s) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) bad_value(s);
  return v;
}

template <class T>
Key number_key(T Config::*outer) {
  return {[outer](const Config& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*outer);
            else return std::to_string(c.*outer);
          },
          [outer](Config& c, const std::string& s) { c.*outer = parse_number<T>(s); }};
}

template <class T>
Key train_key(T TrainConfig::*field) {
  return {[field](const Config& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.train.*field);
            else return std::to_string(c.train.*field);
          },
          [field](Config& c, const std::string& s) { c.train.*field = parse_number<T>(s); }};
}

template <class T>
Key solver_key(T SolverParams::*field) {
  return {[field](const Config& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.train.solver.*field);
            else return std::to_string(c.train.solver.*field);
          },
          [field](Config& c, const std::string& s) { c.train.solver.*field = parse_number<T>(s); }};
}

Key extent_key(Extent TrainConfig::*field, std::size_t Extent::*axis) {
  return {[=](const Config& c) { return std::to_string(c.train.*field.*axis); },
          [=](Config& c, const std::string& s) { c.train.*field.*axis = parse_number<std::size_t>(s); }};
}

template <class E>
Key enum_key(std::vector<std::pair<std::string, E>> names, std::function<E&(Config&)> ref) {
  return {[=](const Config& c) {
            const E v = ref(const_cast<Config&>(c));
            for (const auto& [n, e] : names)
              if (e == v) return n;
            return std::string{};
          },
          [=](Config& c, const std::string& s) {
            for (const auto& [n, e] : names)
              if (n == s) {
                ref(c) = e;
                return;
              }
            bad_value(s);
          }};
}

const std::vector<std::pair<std::string, Key>>& keys() {
  using Scene = eval::ExperimentSpec::Scene;
  static const std::vector<std::pair<std::string, Key>> table = {
      {"modalities", train_key(&TrainConfig::modalities)},
      {"atoms", train_key(&TrainConfig::atoms)},
      {"kernel_rows", extent_key(&TrainConfig::kernel, &Extent::rows)},
      {"kernel_cols", extent_key(&TrainConfig::kernel, &Extent::cols)},
      {"rho", solver_key(&SolverParams::rho)},
      {"lambda", solver_key(&SolverParams::lambda)},
      {"tau", solver_key(&SolverParams::tau)},
      {"max_outer_iters", solver_key(&SolverParams::max_outer_iters)},
      {"rel_tol", solver_key(&SolverParams::rel_tol)},
      {"tv_inner_iters", solver_key(&SolverParams::tv_inner_iters)},
      {"backtrack_eta", solver_key(&SolverParams::backtrack_eta)},
      {"L0", solver_key(&SolverParams::L0)},
      {"gamma", train_key(&TrainConfig::gamma)},
      {"batch_size", train_key(&TrainConfig::batch_size)},
      {"patch_rows", extent_key(&TrainConfig::patch, &Extent::rows)},
      {"patch_cols", extent_key(&TrainConfig::patch, &Extent::cols)},
      {"rounds", train_key(&TrainConfig::rounds)},
      {"seed", train_key(&TrainConfig::seed)},
      {"init", enum_key<DictInit>({{"deltas", DictInit::Deltas}, {"random", DictInit::RandomUnitNorm}},
                                  [](Config& c) -> DictInit& { return c.train.init; })},
      {"lowpass_sigma", train_key(&TrainConfig::lowpass_sigma)},
      {"max_sweeps", train_key(&TrainConfig::max_sweeps)},
      {"sweep_tol", train_key(&TrainConfig::sweep_tol)},
      {"checkpoint_every", train_key(&TrainConfig::checkpoint_every)},
      {"subsample_factor", number_key(&Config::subsample_factor)},
      {"noise_psnr_db", number_key(&Config::noise_psnr_db)},
      {"prediction",
       enum_key<eval::PredictionMode>(
           {{"dict_plus_lowpass", eval::PredictionMode::DictPlusLowpass}, {"x_hat", eval::PredictionMode::XHat}},
           [](Config& c) -> eval::PredictionMode& { return c.prediction; })},
      {"scene", enum_key<Scene>({{"synthetic", Scene::SyntheticShapes}, {"files", Scene::FromFiles}},
                                [](Config& c) -> Scene& { return c.scene; })},
      {"global_rounds", number_key(&Config::global_rounds)},
      {"specialize_rounds", number_key(&Config::specialize_rounds)},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config parse_config(const std::string& text) {
  Config config;
  std::istringstream in(text);
  std::string raw;
  std::vector<std::string> seen;
  for (int line = 1; std::getline(in, raw); ++line) {
    const std::string content = trim(raw.substr(0, raw.find('#')));
    if (content.empty()) continue;
    const std::string where = "line " + std::to_string(line);
    const auto eq = content.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, where + ": expected 'key = value'");
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    const auto& table = keys();
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& kv) { return kv.first == key; });
    if (it == table.end()) fail(ErrorCode::ConfigError, where + ": unknown key '" + key + "'");
    if (value.empty()) fail(ErrorCode::ConfigError, where + ": missing value for key '" + key + "'");
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      fail(ErrorCode::ConfigError, where + ": duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      it->second.set(config, value);
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::ConfigError, where + ": bad value '" + value + "' for key '" + key + "'");
    }
  }
  try {
    config.train.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  if (config.subsample_factor < 1) fail(ErrorCode::ConfigError, "subsample_factor must be >= 1");
  return config;
}

Config load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  return parse_config(text);
}

std::string print_config(const Config& config) {
  std::string out;
  for (const auto& [key, k] : keys()) out += key + " = " + k.get(config) + "\n";
  return out;
}

}  // namespace ocdl::io
