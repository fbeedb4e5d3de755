#include "redstore/weights_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace redstore {

namespace {

constexpr char kMagic[] = "SVLM1\n";
constexpr std::size_t kMagicLen = 6;

void write_section(std::ostream& out, const std::string& name, const Tensor& t) {
  if (name.find_first_of(" \n") != std::string::npos)
    throw DomainError("weights: section name contains whitespace: " + name);
  out << name << ' ' << t.size() << '\n';
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

struct Reader {
  std::string bytes;
  std::size_t pos = 0;

  std::string line() {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos)
      throw WeightsError(WeightsError::Kind::truncated, "weights: truncated header line");
    std::string out = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return out;
  }

  // reads a named section and checks both the declared name and length
  Tensor section(const std::string& want_name, Shape shape) {
    const std::string header = line();
    const std::size_t sp = header.rfind(' ');
    if (sp == std::string::npos)
      throw WeightsError(WeightsError::Kind::malformed, "weights: malformed section header");
    const std::string name = header.substr(0, sp);
    std::size_t declared = 0;
    try {
      declared = std::stoul(header.substr(sp + 1));
    } catch (...) {
      throw WeightsError(WeightsError::Kind::malformed, "weights: bad section length");
    }
    if (name != want_name)
      throw WeightsError(WeightsError::Kind::malformed,
                         "weights: expected section " + want_name + ", found " + name);
    const std::size_t expect = shape_size(shape);
    if (declared != expect)
      throw WeightsError(WeightsError::Kind::inconsistent_header,
                         "weights: inconsistent header: section " + name + " holds " +
                             std::to_string(declared) + " values, architecture needs " +
                             std::to_string(expect));
    const std::size_t nbytes = declared * sizeof(double);
    if (bytes.size() - pos < nbytes)
      throw WeightsError(WeightsError::Kind::truncated,
                         "weights: truncated payload in section " + name);
    Tensor t = Tensor::zeros(std::move(shape));
    std::memcpy(t.data.data(), bytes.data() + pos, nbytes);
    pos += nbytes;
    return t;
  }
};

void save_impl(const std::string& path, const PatchEncoder& e, const CategoryEmbeddings* cats) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(kMagic, kMagicLen);
  const std::size_t ncat = cats ? cats->labels.size() : 0;
  f << e.resolution << ' ' << e.patch << ' ' << e.embed << ' ' << e.hidden << ' ' << ncat
    << '\n';
  write_section(f, "patch_proj", e.w_patch);
  write_section(f, "ln_gamma", e.ln_gamma);
  write_section(f, "ln_beta", e.ln_beta);
  write_section(f, "mlp_w1", e.w1);
  write_section(f, "mlp_b1", e.b1);
  write_section(f, "mlp_w2", e.w2);
  write_section(f, "mlp_b2", e.b2);
  write_section(f, "out_proj", e.w_out);
  if (cats)
    for (std::size_t k = 0; k < ncat; ++k)
      write_section(f, "category:" + cats->labels[k], cats->row(k));
  if (!f) throw IoError("failed writing " + path);
}

std::pair<PatchEncoder, CategoryEmbeddings> load_impl(const std::string& path,
                                                      bool expect_categories) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  Reader r;
  {
    std::ostringstream buf;
    buf << f.rdbuf();
    r.bytes = buf.str();
  }
  if (r.bytes.size() < kMagicLen || r.bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0)
    throw WeightsError(WeightsError::Kind::bad_magic, "weights: bad magic in " + path);
  r.pos = kMagicLen;

  std::size_t resolution = 0, patch = 0, embed = 0, hidden = 0, ncat = 0;
  {
    std::istringstream hs(r.line());
    if (!(hs >> resolution >> patch >> embed >> hidden >> ncat))
      throw WeightsError(WeightsError::Kind::malformed, "weights: malformed header");
  }
  if (resolution == 0 || patch == 0 || embed == 0 || hidden == 0 || resolution % patch != 0)
    throw WeightsError(WeightsError::Kind::inconsistent_header,
                       "weights: invalid architecture header");

  PatchEncoder e;
  e.resolution = resolution;
  e.patch = patch;
  e.embed = embed;
  e.hidden = hidden;
  const std::size_t pdim = 3 * patch * patch;
  e.w_patch = r.section("patch_proj", {pdim, embed});
  e.ln_gamma = r.section("ln_gamma", {embed});
  e.ln_beta = r.section("ln_beta", {embed});
  e.w1 = r.section("mlp_w1", {embed, hidden});
  e.b1 = r.section("mlp_b1", {hidden});
  e.w2 = r.section("mlp_w2", {hidden, embed});
  e.b2 = r.section("mlp_b2", {embed});
  e.w_out = r.section("out_proj", {embed, embed});

  CategoryEmbeddings cats;
  if (ncat > 0) {
    cats.matrix = Tensor::zeros({ncat, embed});
    for (std::size_t k = 0; k < ncat; ++k) {
      // peek the label out of the section header
      const std::size_t nl = r.bytes.find('\n', r.pos);
      if (nl == std::string::npos)
        throw WeightsError(WeightsError::Kind::truncated, "weights: truncated category section");
      const std::string header = r.bytes.substr(r.pos, nl - r.pos);
      const std::size_t sp = header.rfind(' ');
      if (sp == std::string::npos || header.rfind("category:", 0) != 0)
        throw WeightsError(WeightsError::Kind::malformed,
                           "weights: expected a category section");
      const std::string label = header.substr(9, sp - 9);
      Tensor row = r.section(header.substr(0, sp), {embed});
      cats.labels.push_back(label);
      cats.matrix.data.segment(static_cast<Eigen::Index>(k * embed),
                               static_cast<Eigen::Index>(embed)) = row.data;
    }
  } else if (expect_categories) {
    throw WeightsError(WeightsError::Kind::inconsistent_header,
                       "weights: " + path + " stores a bare encoder, not a scorer");
  }
  if (r.pos != r.bytes.size())
    throw WeightsError(WeightsError::Kind::malformed, "weights: trailing bytes in " + path);
  return {std::move(e), std::move(cats)};
}

}  // namespace

void save_weights(const std::string& path, const Scorer& scorer) {
  save_impl(path, scorer.encoder, &scorer.categories);
}

Scorer load_weights(const std::string& path) {
  auto [enc, cats] = load_impl(path, true);
  Scorer s;
  s.encoder = std::move(enc);
  s.categories = std::move(cats);
  return s;
}

void save_encoder(const std::string& path, const PatchEncoder& encoder) {
  save_impl(path, encoder, nullptr);
}

PatchEncoder load_encoder(const std::string& path) {
  return load_impl(path, false).first;
}

std::string ensemble_member_path(const std::string& dir, std::size_t index) {
  return dir + "/ensemble-" + std::to_string(index) + ".svlm";
}

void save_ensemble(const std::string& dir, const ScorerEnsemble& ensemble) {
  validate_ensemble(ensemble);
  for (std::size_t i = 0; i < kEnsembleSize; ++i)
    save_encoder(ensemble_member_path(dir, i), ensemble.members[i]);
}

ScorerEnsemble load_ensemble(const std::string& dir) {
  ScorerEnsemble e;
  for (std::size_t i = 0; i < kEnsembleSize; ++i)
    e.members.push_back(load_encoder(ensemble_member_path(dir, i)));
  validate_ensemble(e);
  return e;
}

}  // namespace redstore
