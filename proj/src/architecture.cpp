#include "igan/architecture.hpp"

#include <iomanip>
#include <sstream>

#include "igan/nn.hpp"

namespace igan {

namespace {

std::size_t ceil_div(std::size_t w, std::size_t d) { return (w + d - 1) / d; }

std::string kxk(std::size_t k) { return std::to_string(k) + "x" + std::to_string(k); }

}  // namespace

Architecture Architecture::scaled(std::size_t divisor) const {
  if (divisor == 0) throw std::invalid_argument("width divisor must be positive");
  Architecture r = *this;
  r.generator = generator.scaled(divisor);
  r.discriminator1 = discriminator1.scaled(divisor);
  r.discriminator2 = discriminator2.scaled(divisor);
  r.width_divisor = width_divisor * divisor;
  return r;
}

void apply_profiles(Architecture& arch) {
  auto set = [](InceptionAllocation& a, std::size_t stride, std::size_t d1, std::size_t d3, std::size_t d5) {
    a.stride = stride;
    a.dilation_1x1 = d1;
    a.dilation_3x3 = d3;
    a.dilation_5x5 = d5;
    a.pool_window = 3;
  };
  set(arch.generator, 1, 1, 1, 2);
  set(arch.discriminator1, 2, 2, 1, 1);
  set(arch.discriminator2, 2, 1, 1, 1);
}

ArchitectureSolution solve_architecture(const std::vector<InceptionTemplate>& templates, const SolveOptions& opts) {
  ArchitectureSolution s;
  s.generator = solve_allocation(256, 256, table::kGenInception, templates, opts);
  s.discriminator1 = solve_allocation(64, 128, table::kDiscInception1, templates, opts);
  s.discriminator2 = solve_allocation(128, 256, table::kDiscInception2, templates, opts);
  s.architecture.generator = s.generator.allocation;
  s.architecture.discriminator1 = s.discriminator1.allocation;
  s.architecture.discriminator2 = s.discriminator2.allocation;
  apply_profiles(s.architecture);
  return s;
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "input";
    case LayerKind::Dense: return "dense";
    case LayerKind::Reshape: return "reshape";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Conv: return "conv";
    case LayerKind::Inception: return "inception";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

namespace {

// Spatial extent after an inception module; every branch must agree.
std::size_t inception_extent(const InceptionAllocation& a, std::size_t extent, const std::string& name) {
  const std::size_t s = a.stride;
  const std::size_t e1 = nn::ConvGeometry{a.in_channels, a.branch1_1x1_out, 1, s, a.dilation_1x1}.output_extent(extent);
  const std::size_t e2 = nn::ConvGeometry{a.in_channels, a.branch2_3x3_out, 3, s, a.dilation_3x3}.output_extent(extent);
  const std::size_t e3 = nn::ConvGeometry{a.in_channels, a.branch3_5x5_out, 5, s, a.dilation_5x5}.output_extent(extent);
  const std::size_t e4 = nn::PoolGeometry{a.pool_window, s, nn::Padding::Same}.output_extent(extent);
  if (e1 != e2 || e1 != e3 || e1 != e4) {
    throw ShapeError(name + ": branch outputs disagree spatially (" + std::to_string(e1) + ", " + std::to_string(e2) +
                     ", " + std::to_string(e3) + ", " + std::to_string(e4) + ")");
  }
  return e1;
}

// Walks the layers, fills `computed` and the parameter counts, and checks
// each against the declared shape.
void propagate(NetworkSpec& spec, Shape input) {
  Shape cur = std::move(input);
  for (auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::Input:
        break;
      case LayerKind::Dense:
        if (shape_numel(cur) != l.in_features) {
          throw ShapeError(l.name + ": expects " + std::to_string(l.in_features) + " inputs, got " + to_string(cur));
        }
        cur = {l.out_features};
        l.params = l.in_features * l.out_features + l.out_features;
        break;
      case LayerKind::Reshape:
        if (shape_numel(cur) != shape_numel(l.declared)) {
          throw ShapeError(l.name + ": cannot reshape " + to_string(cur) + " to " + to_string(l.declared));
        }
        cur = l.declared;
        break;
      case LayerKind::Upsample:
        cur = {cur.at(0) * 2, cur.at(1) * 2, cur.at(2)};
        break;
      case LayerKind::Conv: {
        if (cur.size() != 3 || cur[2] != l.in_features) {
          throw ShapeError(l.name + ": expects " + std::to_string(l.in_features) + " channels, got " + to_string(cur));
        }
        nn::ConvGeometry g{l.in_features, l.out_features, l.kernel, l.stride, l.dilation};
        cur = {g.output_extent(cur[0]), g.output_extent(cur[1]), l.out_features};
        l.params = g.parameter_count();
        break;
      }
      case LayerKind::Inception: {
        const auto& a = *l.inception;
        if (cur.size() != 3 || cur[2] != a.in_channels) {
          throw ShapeError(l.name + ": expects " + std::to_string(a.in_channels) + " channels, got " + to_string(cur));
        }
        const std::size_t h = inception_extent(a, cur[0], l.name);
        const std::size_t w = inception_extent(a, cur[1], l.name);
        cur = {h, w, a.out_channels()};
        l.params = a.parameter_count();
        break;
      }
      case LayerKind::Flatten:
        cur = {shape_numel(cur)};
        break;
    }
    if (l.batch_norm) l.bn_params = nn::batch_norm_parameter_count(cur.back());
    l.computed = cur;
    if (cur != l.declared) {
      throw ShapeError(l.name + ": computed output " + to_string(cur) + " differs from declared " +
                       to_string(l.declared));
    }
  }
}

LayerSpec layer(std::string name, LayerKind kind, Shape declared) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  l.declared = std::move(declared);
  return l;
}

LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t d,
               Shape declared) {
  auto l = layer(std::move(name), LayerKind::Conv, std::move(declared));
  l.in_features = in;
  l.out_features = out;
  l.kernel = k;
  l.stride = s;
  l.dilation = d;
  return l;
}

LayerSpec inception(std::string name, const InceptionAllocation& a, Shape declared) {
  auto l = layer(std::move(name), LayerKind::Inception, std::move(declared));
  l.inception = a;
  l.in_features = a.in_channels;
  l.out_features = a.out_channels();
  l.kernel = 1;
  l.stride = a.stride;
  l.dilation = a.dilation_1x1;
  return l;
}

}  // namespace

NetworkSpec build_generator(const Architecture& arch, const ModelOptions&) {
  const std::size_t div = arch.width_divisor;
  const bool full = div == 1;
  const std::size_t c0 = ceil_div(256, div);
  const std::size_t c1 = ceil_div(128, div);
  NetworkSpec spec;
  spec.role = Role::Generator;
  spec.width_divisor = div;
  auto& L = spec.layers;

  auto in = layer("G.input", LayerKind::Input, {table::kNoise});
  if (full) in.paper_params = 0;
  L.push_back(in);

  auto dense = layer("G.dense", LayerKind::Dense, {16 * c0});
  dense.in_features = table::kNoise;
  dense.out_features = 16 * c0;
  if (full) dense.paper_params = table::kGenDense;
  L.push_back(dense);

  auto zero_param = [&](std::string name, LayerKind kind, Shape declared) {
    auto l = layer(std::move(name), kind, std::move(declared));
    if (full) l.paper_params = 0;
    L.push_back(l);
  };
  zero_param("G.reshape", LayerKind::Reshape, {4, 4, c0});
  zero_param("G.upsample1", LayerKind::Upsample, {8, 8, c0});

  auto c = conv("G.conv1", c0, c0, 3, 1, 2, {8, 8, c0});
  c.batch_norm = true;
  c.spectral_norm = true;
  c.activation = Activation::Relu;
  if (full) {
    c.paper_params = table::kGenConv1;
    c.paper_bn_params = table::kGenConv1Bn;
  }
  L.push_back(c);

  zero_param("G.upsample2", LayerKind::Upsample, {16, 16, c0});
  for (int i = 1; i <= 2; ++i) {
    const std::size_t hw = i == 1 ? 16 : 32;
    auto m = inception("G.inception" + std::to_string(i), arch.generator, {hw, hw, c0});
    m.batch_norm = true;
    m.activation = Activation::Relu;
    if (full) {
      m.paper_params = table::kGenInception;
      m.paper_bn_params = table::kGenInceptionBn;
    }
    L.push_back(m);
    zero_param("G.upsample" + std::to_string(i + 2), LayerKind::Upsample, {hw * 2, hw * 2, c0});
  }

  auto c2 = conv("G.conv2", c0, c1, 3, 1, 1, {64, 64, c1});
  c2.batch_norm = true;
  c2.spectral_norm = true;
  c2.activation = Activation::Relu;
  if (full) {
    c2.paper_params = table::kGenConv2;
    c2.paper_bn_params = table::kGenConv2Bn;
  }
  L.push_back(c2);

  auto out = conv("G.conv_out", c1, 3, 3, 1, 1, {64, 64, 3});
  out.activation = Activation::Tanh;
  if (full) out.paper_params = table::kGenConvOut;
  L.push_back(out);

  propagate(spec, {table::kNoise});
  return spec;
}

NetworkSpec build_discriminator(const Architecture& arch, const ModelOptions& opts) {
  const std::size_t div = arch.width_divisor;
  const bool full = div == 1;
  const std::size_t c64 = ceil_div(64, div);
  const std::size_t c128 = ceil_div(128, div);
  const std::size_t c256 = ceil_div(256, div);
  NetworkSpec spec;
  spec.role = Role::Discriminator;
  spec.width_divisor = div;
  auto& L = spec.layers;

  L.push_back(layer("D.input", LayerKind::Input, {64, 64, 3}));

  auto c1 = conv("D.conv1", 3, c64, 3, 1, 2, {64, 64, c64});
  c1.activation = Activation::LeakyRelu;
  c1.dropout = true;
  c1.spectral_norm = opts.discriminator_spectral_norm;
  if (full) c1.paper_params = table::kDiscConv1;
  L.push_back(c1);

  auto m1 = inception("D.inception1", arch.discriminator1, {32, 32, c128});
  m1.batch_norm = true;
  m1.dropout = true;
  m1.activation = Activation::LeakyRelu;
  if (full) {
    m1.paper_params = table::kDiscInception1;
    m1.paper_bn_params = table::kDiscInception1Bn;
  }
  L.push_back(m1);

  auto m2 = inception("D.inception2", arch.discriminator2, {16, 16, c256});
  m2.batch_norm = true;
  m2.dropout = true;
  m2.activation = Activation::LeakyRelu;
  if (full) {
    m2.paper_params = table::kDiscInception2;
    m2.paper_bn_params = table::kDiscInception2Bn;
  }
  L.push_back(m2);

  auto pw = conv("D.conv_pw", c256, c256, 1, 2, 1, {8, 8, c256});
  pw.spectral_norm = opts.discriminator_spectral_norm;
  if (full) pw.paper_params = table::kDiscConvPointwise;
  L.push_back(pw);

  auto c2 = conv("D.conv2", c256, c256, 3, 2, 1, {4, 4, c256});
  c2.batch_norm = true;
  c2.dropout = true;
  c2.activation = Activation::LeakyRelu;
  c2.spectral_norm = opts.discriminator_spectral_norm;
  if (full) {
    c2.paper_params = table::kDiscConv2;
    c2.paper_bn_params = table::kDiscConv2Bn;
  }
  L.push_back(c2);

  auto flat = layer("D.flatten", LayerKind::Flatten, {16 * c256});
  if (full) flat.paper_params = 0;
  L.push_back(flat);

  auto dense = layer("D.dense", LayerKind::Dense, {1});
  dense.in_features = 16 * c256;
  dense.out_features = 1;
  dense.activation = Activation::Sigmoid;
  if (full) dense.paper_params = table::kDiscDense;
  L.push_back(dense);

  propagate(spec, {64, 64, 3});
  return spec;
}

std::size_t total_parameters(const NetworkSpec& spec) {
  std::size_t t = 0;
  for (const auto& l : spec.layers) t += l.params + l.bn_params;
  return t;
}

bool ParamReport::non_inception_rows_match() const {
  for (const auto& r : rows) {
    if (r.branch || r.inception || !r.has_target()) continue;
    if (!r.matches()) return false;
  }
  return true;
}

bool ParamReport::all_rows_match() const {
  for (const auto& r : rows) {
    if (!r.branch && r.has_target() && !r.matches()) return false;
  }
  return true;
}

namespace {

void append_rows(const NetworkSpec& spec, ParamReport& rep, std::size_t& total, std::size_t& paper_total) {
  for (const auto& l : spec.layers) {
    ParamRow row;
    row.name = l.name;
    row.computed = l.params;
    row.paper = l.paper_params;
    if (l.kind == LayerKind::Conv) {
      row.kernel = kxk(l.kernel);
      row.stride = std::to_string(l.stride);
      row.dilation = std::to_string(l.dilation);
    } else if (l.kind == LayerKind::Inception) {
      row.kernel = "module";
      row.stride = std::to_string(l.inception->stride);
      row.dilation = "-";
      row.inception = true;
      row.note = l.inception->describe();
    } else {
      row.kernel = row.stride = row.dilation = "-";
    }
    total += row.computed;
    if (row.paper) paper_total += *row.paper;
    rep.rows.push_back(row);

    if (l.kind == LayerKind::Inception) {
      const auto& a = *l.inception;
      const std::size_t pw = a.in_channels + 1;
      auto branch = [&](std::string suffix, std::size_t k, std::size_t d, std::size_t params, std::string note) {
        ParamRow b;
        b.name = l.name + "/" + suffix;
        b.kernel = kxk(k);
        b.stride = std::to_string(a.stride);
        b.dilation = std::to_string(d);
        b.computed = params;
        b.inception = true;
        b.branch = true;
        b.note = std::move(note);
        rep.rows.push_back(b);
      };
      std::string n1 = a.dilation_1x1 > 1 ? "dilation on a 1x1 kernel has no effect" : "";
      if (a.stride > 1) n1 += std::string(n1.empty() ? "" : "; ") + "every branch strided so the concat is well-formed";
      branch("1x1", 1, a.dilation_1x1, pw * a.branch1_1x1_out, n1);
      const std::size_t p3 = a.branch2_bottleneck ? pw * a.branch2_bottleneck + (9 * a.branch2_bottleneck + 1) * a.branch2_3x3_out
                                                  : (9 * a.in_channels + 1) * a.branch2_3x3_out;
      branch("3x3", 3, a.dilation_3x3, p3,
             a.branch2_bottleneck ? "1x1 reduce to " + std::to_string(a.branch2_bottleneck) : "direct");
      const std::size_t p5 = a.branch3_bottleneck ? pw * a.branch3_bottleneck + (25 * a.branch3_bottleneck + 1) * a.branch3_5x5_out
                                                  : (25 * a.in_channels + 1) * a.branch3_5x5_out;
      branch("5x5", 5, a.dilation_5x5, p5,
             a.branch3_bottleneck ? "1x1 reduce to " + std::to_string(a.branch3_bottleneck) : "direct");
      branch("pool_1x1", 1, 1, pw * a.branch4_pool_1x1_out, "avg pool 3x3 then 1x1");
    }

    if (l.batch_norm) {
      ParamRow bn;
      bn.name = l.name + ".bn";
      bn.kernel = bn.stride = bn.dilation = "-";
      bn.computed = l.bn_params;
      bn.paper = l.paper_bn_params;
      bn.note = "gamma, beta, running mean, running variance";
      total += bn.computed;
      if (bn.paper) paper_total += *bn.paper;
      rep.rows.push_back(bn);
    }
  }
}

}  // namespace

ParamReport param_report(const NetworkSpec& generator, const NetworkSpec& discriminator) {
  ParamReport rep;
  append_rows(generator, rep, rep.generator_total, rep.generator_paper_total);
  append_rows(discriminator, rep, rep.discriminator_total, rep.discriminator_paper_total);
  return rep;
}

std::string report_text(const ParamReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(26) << "row" << std::setw(8) << "kernel" << std::setw(8) << "stride" << std::setw(10)
     << "dilation" << std::right << std::setw(12) << "computed" << std::setw(12) << "table" << "  status\n";
  auto line = [&](const ParamRow& r) {
    os << std::left << std::setw(26) << (r.branch ? "  " + r.name : r.name) << std::setw(8) << r.kernel << std::setw(8)
       << r.stride << std::setw(10) << r.dilation << std::right << std::setw(12) << r.computed << std::setw(12)
       << (r.paper ? std::to_string(*r.paper) : std::string("-")) << "  "
       << (r.paper ? (r.matches() ? "MATCH" : "MISMATCH") : "-");
    if (!r.note.empty()) os << "  # " << r.note;
    os << '\n';
  };
  for (const auto& r : report.rows) line(r);
  os << "generator total      " << report.generator_total << " (table rows sum " << report.generator_paper_total
     << ")\n";
  os << "discriminator total  " << report.discriminator_total << " (table rows sum "
     << report.discriminator_paper_total << ")\n";
  os << "non-inception rows: " << (report.non_inception_rows_match() ? "all match" : "MISMATCH") << '\n';
  return os.str();
}

std::string report_csv(const ParamReport& report) {
  std::ostringstream os;
  os << "row_name,kernel,stride,dilation,params_computed,params_paper,match\n";
  for (const auto& r : report.rows) {
    os << r.name << ',' << r.kernel << ',' << r.stride << ',' << r.dilation << ',' << r.computed << ','
       << (r.paper ? std::to_string(*r.paper) : std::string()) << ','
       << (r.paper ? (r.matches() ? "true" : "false") : std::string()) << '\n';
  }
  os << "generator_total,,,," << report.generator_total << ',' << report.generator_paper_total << ','
     << (report.generator_total == report.generator_paper_total ? "true" : "false") << '\n';
  os << "discriminator_total,,,," << report.discriminator_total << ',' << report.discriminator_paper_total << ','
     << (report.discriminator_total == report.discriminator_paper_total ? "true" : "false") << '\n';
  return os.str();
}

std::string allocation_ledger(const ArchitectureSolution& s) {
  std::ostringstream os;
  auto entry = [&](const char* name, std::size_t target, const SolveResult& r) {
    os << name << ": target " << target << ", "
       << (r.status == SolveStatus::Exact ? "exact" : "best fit, deviation " + std::to_string(r.deviation)) << " on "
       << (r.step == 1 ? "the integer grid" : "the multiple-of-" + std::to_string(r.step) + " grid");
    if (r.status == SolveStatus::Exact) os << " (" << r.exact_solutions << " exact hits, tie-broken)";
    os << "\n  " << r.allocation.describe() << "\n  searched:";
    for (auto t : r.searched) os << ' ' << to_string(t);
    os << '\n';
  };
  entry("generator inception", table::kGenInception, s.generator);
  entry("discriminator inception 1", table::kDiscInception1, s.discriminator1);
  entry("discriminator inception 2", table::kDiscInception2, s.discriminator2);
  return os.str();
}

}  // namespace igan
