#include "urfb/netspec.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace urfb {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

// tokens within an arch item; commas count as whitespace ("maxpool 3, stride 3")
std::vector<std::string> item_tokens(const std::string& item) {
    std::vector<std::string> toks;
    std::string cur;
    for (char c : item) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
            if (!cur.empty()) toks.push_back(cur), cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) toks.push_back(cur);
    return toks;
}

[[noreturn]] void arch_error(std::size_t item_idx, const std::string& msg) {
    throw std::runtime_error("arch item " + std::to_string(item_idx + 1) + ": " + msg);
}

int parse_int(const std::string& tok, std::size_t item_idx, const char* what) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        arch_error(item_idx, std::string("expected an integer ") + what + ", got '" + tok + "'");
    }
}

double parse_double_tok(const std::string& tok, std::size_t item_idx, const char* what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        arch_error(item_idx, std::string("expected a number ") + what + ", got '" + tok + "'");
    }
}

std::pair<int, int> parse_kernel(const std::string& tok, std::size_t item_idx) {
    std::size_t x = tok.find_first_of("xX");
    if (x == std::string::npos || x == 0 || x + 1 == tok.size())
        arch_error(item_idx, "expected a kernel size like 5x5, got '" + tok + "'");
    int kh = parse_int(tok.substr(0, x), item_idx, "kernel height");
    int kw = parse_int(tok.substr(x + 1), item_idx, "kernel width");
    return {kh, kw};
}

}  // namespace

const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "Conv";
        case LayerKind::LocalConv: return "LocalConv";
        case LayerKind::Maxpool: return "Maxpool";
        case LayerKind::Dropout: return "Drop";
        case LayerKind::Full: return "Full";
        case LayerKind::Sum: return "Sum";
        case LayerKind::Output: return "Output";
    }
    return "?";
}

const char* to_string(Mode m) {
    switch (m) {
        case Mode::BP: return "BP";
        case Mode::FRFB: return "FRFB";
        case Mode::URFB: return "URFB";
    }
    return "?";
}

const char* to_string(Loss l) {
    return l == Loss::Hinge ? "hinge" : "softmax-xent";
}

Mode mode_from_string(const std::string& s) {
    std::string m = lower(trim(s));
    if (m == "bp" || m == "bp-h") return Mode::BP;
    if (m == "frfb") return Mode::FRFB;
    if (m == "urfb") return Mode::URFB;
    throw std::runtime_error("unknown mode '" + s + "' (expected BP, BP-H, FRFB or URFB)");
}

Loss loss_from_string(const std::string& s) {
    std::string m = lower(trim(s));
    if (m == "hinge") return Loss::Hinge;
    if (m == "softmax-xent" || m == "softmax_xent" || m == "softmax") return Loss::SoftmaxXent;
    throw std::runtime_error("unknown loss '" + s + "' (expected hinge or softmax-xent)");
}

std::string FeatShape::str() const {
    if (spatial)
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    return "flat:" + std::to_string(units);
}

std::vector<LayerSpec> parse_arch(const std::string& text) {
    std::vector<LayerSpec> layers;
    auto items = split(text, ';');
    for (std::size_t idx = 0; idx < items.size(); ++idx) {
        auto toks = item_tokens(items[idx]);
        if (toks.empty()) {
            if (idx + 1 == items.size()) continue;  // tolerate a trailing ';'
            arch_error(idx, "empty item");
        }
        std::string kw = lower(toks[0]);
        LayerSpec spec{};
        if (kw == "conv" || kw == "localconv") {
            spec.kind = kw == "conv" ? LayerKind::Conv : LayerKind::LocalConv;
            if (toks.size() != 3) arch_error(idx, "expected '" + kw + " <filters> <h>x<w>'");
            spec.filters = parse_int(toks[1], idx, "filter count");
            std::tie(spec.kh, spec.kw) = parse_kernel(toks[2], idx);
            if (spec.filters < 1 || spec.kh < 1 || spec.kw < 1)
                arch_error(idx, "filters and kernel sizes must be positive");
        } else if (kw == "maxpool") {
            spec.kind = LayerKind::Maxpool;
            if (toks.size() != 2 && toks.size() != 4)
                arch_error(idx, "expected 'maxpool <n>' or 'maxpool <n> stride <s>'");
            spec.pool = parse_int(toks[1], idx, "pool size");
            spec.stride = 2;
            if (toks.size() == 4) {
                if (lower(toks[2]) != "stride") arch_error(idx, "expected 'stride', got '" + toks[2] + "'");
                spec.stride = parse_int(toks[3], idx, "stride");
            }
            if (spec.pool < 1 || spec.stride < 1) arch_error(idx, "pool size and stride must be positive");
        } else if (kw == "drop" || kw == "dropout") {
            spec.kind = LayerKind::Dropout;
            if (toks.size() != 2) arch_error(idx, "expected 'drop <p>'");
            spec.drop_p = parse_double_tok(toks[1], idx, "drop fraction");
            if (!(spec.drop_p >= 0.0 && spec.drop_p < 1.0))
                arch_error(idx, "drop fraction must be in [0, 1)");
        } else if (kw == "full") {
            spec.kind = LayerKind::Full;
            std::size_t u = 1;
            if (u < toks.size() && (lower(toks[u]) == "conn." || lower(toks[u]) == "conn")) ++u;
            if (u + 1 != toks.size()) arch_error(idx, "expected 'full <units>'");
            spec.units = parse_int(toks[u], idx, "unit count");
            if (spec.units < 1) arch_error(idx, "unit count must be positive");
        } else if (kw == "sum") {
            spec.kind = LayerKind::Sum;
            if (toks.size() != 1) arch_error(idx, "'sum' takes no parameters");
        } else if (kw == "output") {
            spec.kind = LayerKind::Output;
            if (toks.size() != 1) arch_error(idx, "'output' takes no parameters");
        } else {
            arch_error(idx, "unknown layer keyword '" + toks[0] + "'");
        }
        layers.push_back(spec);
    }
    if (layers.empty()) throw std::runtime_error("arch item 1: empty architecture");
    return layers;
}

std::string print_arch(const std::vector<LayerSpec>& layers) {
    std::ostringstream os;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& s = layers[i];
        if (i) os << "; ";
        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::LocalConv:
                os << to_string(s.kind) << ' ' << s.filters << ' ' << s.kh << 'x' << s.kw;
                break;
            case LayerKind::Maxpool:
                os << "Maxpool " << s.pool;
                if (s.stride != 2) os << " stride " << s.stride;
                break;
            case LayerKind::Dropout: {
                std::ostringstream p;
                p << s.drop_p;
                os << "Drop " << p.str();
                break;
            }
            case LayerKind::Full:
                os << "Full " << s.units;
                break;
            case LayerKind::Sum:
                os << "Sum";
                break;
            case LayerKind::Output:
                os << "Output";
                break;
        }
    }
    return os.str();
}

std::vector<FeatShape> infer_shapes(const std::vector<LayerSpec>& layers, FeatShape input,
                                    int classes) {
    if (classes < 1) throw std::runtime_error("infer_shapes: class count must be positive");
    if (input.flat_size() < 1) throw std::runtime_error("infer_shapes: empty input shape");
    std::vector<FeatShape> shapes;
    shapes.reserve(layers.size());
    FeatShape cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& s = layers[i];
        auto err = [&](const std::string& msg) {
            throw std::runtime_error("arch item " + std::to_string(i + 1) + " (" +
                                     to_string(s.kind) + "): " + msg);
        };
        if (i > 0 && layers[i - 1].kind == LayerKind::Output) err("layers after Output");
        switch (s.kind) {
            case LayerKind::Conv:
            case LayerKind::LocalConv:
                if (!cur.spatial) err("needs a spatial input, have " + cur.str());
                cur = FeatShape::image(s.filters, cur.h, cur.w);
                break;
            case LayerKind::Maxpool:
                if (!cur.spatial) err("needs a spatial input, have " + cur.str());
                cur = FeatShape::image(cur.c,
                                       static_cast<int>(std::ceil(double(cur.h) / s.stride)),
                                       static_cast<int>(std::ceil(double(cur.w) / s.stride)));
                break;
            case LayerKind::Dropout:
                break;  // shape preserved
            case LayerKind::Full:
                cur = FeatShape::flat(s.units);
                break;
            case LayerKind::Sum: {
                if (i < 2) err("needs two preceding layers");
                FeatShape a = shapes[i - 1], b = shapes[i - 2];
                if (!(a == b)) err("operand shapes differ: " + a.str() + " vs " + b.str());
                cur = a;
                break;
            }
            case LayerKind::Output:
                cur = FeatShape::flat(classes);
                break;
        }
        shapes.push_back(cur);
    }
    if (layers.back().kind != LayerKind::Output)
        throw std::runtime_error("architecture must end with an Output layer");
    if (std::count_if(layers.begin(), layers.end(),
                      [](const LayerSpec& l) { return l.kind == LayerKind::Output; }) != 1)
        throw std::runtime_error("architecture must contain exactly one Output layer");
    return shapes;
}

NetSpec make_netspec(std::vector<LayerSpec> layers, FeatShape input, int classes) {
    NetSpec spec;
    spec.shapes = infer_shapes(layers, input, classes);
    spec.layers = std::move(layers);
    spec.input = input;
    spec.classes = classes;
    return spec;
}

NetSpec make_netspec(const std::string& arch, FeatShape input, int classes) {
    return make_netspec(parse_arch(arch), input, classes);
}

// --- experiment configuration --------------------------------------------------

namespace {

double cfg_double(const std::string& k, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + k + "': expected a number, got '" + v + "'");
    }
}

long long cfg_int(const std::string& k, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + k + "': expected an integer, got '" + v + "'");
    }
}

bool cfg_bool(const std::string& k, const std::string& v) {
    std::string s = lower(v);
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw std::runtime_error("config key '" + k + "': expected a boolean, got '" + v + "'");
}

}  // namespace

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    std::string k = lower(trim(key));
    std::string v = trim(value);
    if (k == "arch") cfg.arch = v;
    else if (k == "mode") cfg.mode = mode_from_string(v);
    else if (k == "loss") cfg.loss = loss_from_string(v);
    else if (k == "eta") cfg.eta = cfg_double(k, v);
    else if (k == "mu") cfg.mu = cfg_double(k, v);
    else if (k == "batch_size" || k == "batch") cfg.batch_size = static_cast<int>(cfg_int(k, v));
    else if (k == "epochs") cfg.epochs = static_cast<int>(cfg_int(k, v));
    else if (k == "connectivity") cfg.connectivity = cfg_double(k, v);
    else if (k == "seed") cfg.seed = static_cast<std::uint64_t>(cfg_int(k, v));
    else if (k == "untied") cfg.untied = cfg_bool(k, v);
    else if (k == "dataset") cfg.dataset = lower(v);
    else if (k == "data_dir") cfg.data_dir = v;
    else if (k == "val_size") cfg.val_size = static_cast<int>(cfg_int(k, v));
    else if (k == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(cfg_int(k, v));
    else if (k == "blobs_per_class") cfg.blobs_per_class = static_cast<int>(cfg_int(k, v));
    else if (k == "blobs_dim") cfg.blobs_dim = static_cast<int>(cfg_int(k, v));
    else if (k == "blobs_sep") cfg.blobs_sep = cfg_double(k, v);
    else if (k == "blobs_classes") cfg.blobs_classes = static_cast<int>(cfg_int(k, v));
    else if (k == "synth_n") cfg.synth_n = static_cast<int>(cfg_int(k, v));
    else if (k == "synth_noise") cfg.synth_noise = cfg_double(k, v);
    else throw std::runtime_error("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key=value, got '" + line + "'");
        pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    // The loss default depends on the mode ("BP-H" is BP + hinge, random-feedback
    // modes default to hinge, plain BP to softmax-xent), so resolve loss last.
    bool loss_seen = false;
    std::string loss_value, mode_value;
    for (const auto& [k, v] : pairs) {
        std::string kl = lower(k);
        if (kl == "loss") {
            loss_seen = true;
            loss_value = v;
        } else if (kl == "mode") {
            mode_value = v;
            apply_override(cfg, k, v);
        } else {
            apply_override(cfg, k, v);
        }
    }
    if (loss_seen) {
        cfg.loss = loss_from_string(loss_value);
    } else if (!mode_value.empty()) {
        std::string m = lower(trim(mode_value));
        cfg.loss = (m == "bp") ? Loss::SoftmaxXent : Loss::Hinge;
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
    if (!(cfg.eta > 0.0)) throw std::runtime_error("config: eta must be positive");
    if (!(cfg.mu >= 0.0)) throw std::runtime_error("config: mu must be non-negative");
    if (cfg.batch_size < 1) throw std::runtime_error("config: batch_size must be positive");
    if (cfg.epochs < 0) throw std::runtime_error("config: epochs must be non-negative");
    if (!(cfg.connectivity > 0.0 && cfg.connectivity <= 1.0))
        throw std::runtime_error("config: connectivity must be in (0, 1]");
    if (cfg.val_size < 0) throw std::runtime_error("config: val_size must be non-negative");
    if (cfg.checkpoint_every < 0)
        throw std::runtime_error("config: checkpoint_every must be non-negative");
    static const char* names[] = {"cifar10", "cifar100", "mnist", "blobs", "synth"};
    bool ok = false;
    for (const char* n : names) ok = ok || cfg.dataset == n;
    if (!ok) throw std::runtime_error("config: unknown dataset '" + cfg.dataset + "'");
    parse_arch(cfg.arch);  // surfaces arch syntax errors at config time
}

std::string dump_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "arch=" << cfg.arch << '\n'
       << "mode=" << to_string(cfg.mode) << '\n'
       << "loss=" << to_string(cfg.loss) << '\n'
       << "eta=" << cfg.eta << '\n'
       << "mu=" << cfg.mu << '\n'
       << "batch_size=" << cfg.batch_size << '\n'
       << "epochs=" << cfg.epochs << '\n'
       << "connectivity=" << cfg.connectivity << '\n'
       << "seed=" << cfg.seed << '\n'
       << "untied=" << (cfg.untied ? "true" : "false") << '\n'
       << "dataset=" << cfg.dataset << '\n'
       << "data_dir=" << cfg.data_dir << '\n'
       << "val_size=" << cfg.val_size << '\n'
       << "checkpoint_every=" << cfg.checkpoint_every << '\n'
       << "blobs_per_class=" << cfg.blobs_per_class << '\n'
       << "blobs_dim=" << cfg.blobs_dim << '\n'
       << "blobs_sep=" << cfg.blobs_sep << '\n'
       << "blobs_classes=" << cfg.blobs_classes << '\n'
       << "synth_n=" << cfg.synth_n << '\n'
       << "synth_noise=" << cfg.synth_noise << '\n';
    return os.str();
}

}  // namespace urfb
