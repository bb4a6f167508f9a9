#include "urfb/harness.hpp"

#include "urfb/circuits.hpp"
#include "urfb/lindyn.hpp"
#include "urfb/plot.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace urfb {

using namespace lindyn;

const char* const kVersion = "0.1.0";

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores doubles little-endian");

// --- checkpoints --------------------------------------------------------------------

namespace {
constexpr const char* kCkptMagic = "URFBCKPT1";
}

void save_checkpoint(const std::string& path, Network& net) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f << kCkptMagic << '\n';
    for (const auto& p : net.named_params()) {
        f << "tensor " << p.name << ' ' << p.shape.size();
        for (std::size_t d : p.shape) f << ' ' << d;
        f << '\n';
        f.write(reinterpret_cast<const char*>(p.data),
                static_cast<std::streamsize>(p.size * sizeof(double)));
    }
    f << "end\n";
    if (!f) throw std::runtime_error("short write to checkpoint: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    std::size_t pos = 0;
    auto read_line = [&]() {
        const std::size_t nl = buf.find('\n', pos);
        if (nl == std::string::npos)
            throw std::runtime_error("corrupt checkpoint (unterminated header line): " + path);
        std::string line = buf.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    if (read_line() != kCkptMagic)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);

    std::vector<NamedTensor> out;
    while (true) {
        const std::string line = read_line();
        if (line == "end") break;
        std::istringstream ls(line);
        std::string word, name;
        std::size_t rank = 0;
        if (!(ls >> word >> name >> rank) || word != "tensor")
            throw std::runtime_error("corrupt checkpoint header '" + line + "' in " + path);
        NamedTensor t;
        t.name = name;
        std::size_t count = 1;
        for (std::size_t r = 0; r < rank; ++r) {
            std::size_t d = 0;
            if (!(ls >> d)) throw std::runtime_error("corrupt tensor dims in " + path);
            t.shape.push_back(d);
            count *= d;
        }
        if (pos + count * sizeof(double) > buf.size())
            throw std::runtime_error("truncated checkpoint: " + path);
        t.values.resize(count);
        std::memcpy(t.values.data(), buf.data() + pos, count * sizeof(double));
        pos += count * sizeof(double);
        out.push_back(std::move(t));
    }
    if (pos != buf.size())
        throw std::runtime_error("trailing bytes after checkpoint end marker: " + path);
    return out;
}

void restore_checkpoint(Network& net, const std::string& path) {
    std::map<std::string, const NamedTensor*> by_name;
    const auto tensors = load_checkpoint(path);
    for (const auto& t : tensors) by_name[t.name] = &t;

    for (const auto& p : net.named_params()) {
        const auto it = by_name.find(p.name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint " + path + " is missing tensor " + p.name);
        const NamedTensor& t = *it->second;
        if (t.shape != p.shape || t.values.size() != p.size)
            throw std::runtime_error("checkpoint tensor " + p.name + " has a different shape");
        std::memcpy(p.data, t.values.data(), p.size * sizeof(double));
        by_name.erase(it);
    }
    if (!by_name.empty())
        throw std::runtime_error("checkpoint tensor " + by_name.begin()->first +
                                 " has no counterpart in the network");
}

std::vector<CkptAlignment> checkpoint_alignment(const std::vector<NamedTensor>& tensors) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;
    auto lookup = [&](const std::string& n) -> const NamedTensor* {
        const auto it = by_name.find(n);
        return it == by_name.end() ? nullptr : it->second;
    };

    // collect "layer<i>.<kind>" prefixes in layer order
    std::vector<std::pair<int, std::string>> prefixes;
    for (const auto& t : tensors) {
        const std::size_t dot = t.name.rfind('.');
        if (dot == std::string::npos || t.name.rfind("layer", 0) != 0) continue;
        const std::string prefix = t.name.substr(0, dot);
        const int idx = std::atoi(t.name.c_str() + 5);
        if (std::find_if(prefixes.begin(), prefixes.end(),
                         [&](const auto& p) { return p.second == prefix; }) == prefixes.end())
            prefixes.emplace_back(idx, prefix);
    }
    std::sort(prefixes.begin(), prefixes.end());

    std::vector<CkptAlignment> out;
    for (const auto& [idx, prefix] : prefixes) {
        (void)idx;
        const bool local = prefix.size() > 6 && prefix.substr(prefix.size() - 5) == "local";
        const NamedTensor* W = lookup(prefix + (local ? ".Wvals" : ".W"));
        const NamedTensor* R = lookup(prefix + (local ? ".Rvals" : ".R"));
        if (!W || !R) continue;
        const NamedTensor* maskW = lookup(prefix + (local ? ".maskWvals" : ".maskW"));

        std::vector<double> ws, rs;
        ws.reserve(W->values.size());
        rs.reserve(W->values.size());
        const bool dense = prefix.find(".full") != std::string::npos;
        if (dense) {
            // forward [out, in] pairs with feedback [in, out]
            if (W->shape.size() != 2 || R->shape.size() != 2 || R->shape[0] != W->shape[1] ||
                R->shape[1] != W->shape[0])
                throw std::runtime_error("checkpoint " + prefix + ": W/R shapes do not pair up");
            const std::size_t o = W->shape[0], n = W->shape[1];
            for (std::size_t k = 0; k < o; ++k)
                for (std::size_t i = 0; i < n; ++i) {
                    if (maskW && maskW->values[k * n + i] == 0.0) continue;
                    ws.push_back(W->values[k * n + i]);
                    rs.push_back(R->values[i * o + k]);
                }
        } else {
            if (W->values.size() != R->values.size())
                throw std::runtime_error("checkpoint " + prefix + ": W/R sizes differ");
            for (std::size_t j = 0; j < W->values.size(); ++j) {
                if (maskW && maskW->values[j] == 0.0) continue;
                ws.push_back(W->values[j]);
                rs.push_back(R->values[j]);
            }
        }
        double corr = std::numeric_limits<double>::quiet_NaN();
        if (ws.size() >= 2) {
            try {
                corr = pearson(ws, rs);
            } catch (const std::domain_error&) {
                // zero variance (e.g. an all-zero init) stays NaN
            }
        }
        out.push_back({prefix, corr});
    }
    return out;
}

// --- metrics ------------------------------------------------------------------------

namespace {
std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}
}  // namespace

std::string metrics_csv_header(std::size_t corr_layers) {
    std::string h = "epoch,train_err,val_err,train_loss";
    for (std::size_t i = 1; i <= corr_layers; ++i) h += ",corr_l" + std::to_string(i);
    return h;
}

std::string metrics_csv_row(const MetricsRecord& rec) {
    std::string row = std::to_string(rec.epoch) + ',' + fmt_g(rec.train_err) + ',' +
                      fmt_g(rec.val_err) + ',' + fmt_g(rec.train_loss);
    for (double c : rec.layer_corr) row += ',' + fmt_g(c);
    return row;
}

void write_metrics_csv(const std::string& path, std::size_t corr_layers,
                       const std::vector<MetricsRecord>& records) {
    std::ofstream f(path, std::ios::binary);  // binary: identical bytes everywhere
    if (!f) throw std::runtime_error("cannot open " + path);
    f << metrics_csv_header(corr_layers) << '\n';
    for (const auto& rec : records) {
        if (rec.layer_corr.size() != corr_layers)
            throw std::runtime_error("metrics row has inconsistent correlation count");
        f << metrics_csv_row(rec) << '\n';
    }
    if (!f) throw std::runtime_error("short write to " + path);
}

// --- manifest -----------------------------------------------------------------------

std::string utc_timestamp_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 8);
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(ch) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
                    out += buf;
                } else {
                    out += ch;
                }
        }
    }
    return out;
}

}  // namespace

std::string manifest_json(const RunManifest& m) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"command\": \"" << json_escape(m.command) << "\",\n";
    os << "  \"code_version\": \"" << json_escape(m.code_version) << "\",\n";
    os << "  \"seed\": " << m.seed << ",\n";
    os << "  \"output_dir\": \"" << json_escape(m.output_dir) << "\",\n";
    os << "  \"started\": \"" << json_escape(m.started) << "\",\n";
    os << "  \"finished\": \"" << json_escape(m.finished) << "\",\n";
    os << "  \"outputs\": [";
    for (std::size_t i = 0; i < m.outputs.size(); ++i)
        os << (i ? ", " : "") << '"' << json_escape(m.outputs[i]) << '"';
    os << "],\n";
    os << "  \"config\": {";
    std::istringstream is(m.config_text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        const std::string k = eq == std::string::npos ? line : line.substr(0, eq);
        const std::string v = eq == std::string::npos ? "" : line.substr(eq + 1);
        os << (first ? "\n" : ",\n") << "    \"" << json_escape(k) << "\": \"" << json_escape(v)
           << '"';
        first = false;
    }
    os << "\n  }\n}\n";
    return os.str();
}

void write_manifest(const RunManifest& m) {
    const std::string path = m.output_dir + "/manifest.json";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << manifest_json(m);
    if (!f) throw std::runtime_error("short write to " + path);
}

// --- shared run machinery -----------------------------------------------------------

Dataset load_dataset(const ExperimentConfig& cfg, Rng& rng) {
    if (cfg.dataset == "blobs")
        return toy_blobs(rng, cfg.blobs_per_class, cfg.blobs_classes, cfg.blobs_dim,
                         cfg.blobs_sep);
    if (cfg.dataset == "synth") return synth_dataset(rng, cfg.synth_n, cfg.synth_noise);

    std::string dir = cfg.data_dir;
    if (dir.empty()) {
        const char* root = std::getenv("URFB_DATA_ROOT");
        if (!root || !*root)
            throw std::runtime_error("dataset '" + cfg.dataset +
                                     "' needs data_dir=<path> or $URFB_DATA_ROOT");
        dir = std::string(root) + "/" + cfg.dataset;
    }
    if (cfg.dataset == "cifar10") return load_cifar10(dir);
    if (cfg.dataset == "cifar100") return load_cifar100(dir);
    if (cfg.dataset == "mnist") return load_mnist(dir);
    throw std::runtime_error("unknown dataset '" + cfg.dataset + "'");
}

int run_training(const ExperimentConfig& cfg, const std::string& out_dir) {
    RunManifest man;
    man.command = "train";
    man.config_text = dump_config(cfg);
    man.seed = cfg.seed;
    man.code_version = kVersion;
    man.output_dir = out_dir;
    man.started = utc_timestamp_now();
    fs::create_directories(out_dir);

    // independent child streams so dataset synthesis, initialization and the
    // batch schedule each consume their own deterministic sequence
    Rng root(cfg.seed);
    Rng data_rng = root.fork(1);
    Rng init_rng = root.fork(2);
    Rng train_rng = root.fork(3);

    const Dataset data = load_dataset(cfg, data_rng);
    if (data.size() == 0) throw std::runtime_error("dataset is empty");
    if (cfg.val_size >= static_cast<int>(data.size()))
        throw std::runtime_error("val_size leaves no training samples");
    const int train_count = static_cast<int>(data.size()) - cfg.val_size;

    const NetSpec spec = make_netspec(cfg.arch, data.shape, data.classes);
    Network net = build_network(spec, cfg, init_rng);
    const std::size_t corr_layers = net.alignment().size();

    std::printf("train: mode=%s loss=%s | %zu samples (%d train, %d val) | %d epochs -> %s\n",
                to_string(cfg.mode), to_string(cfg.loss), data.size(), train_count, cfg.val_size,
                cfg.epochs, out_dir.c_str());

    auto ckpt_name = [](int epoch) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "ckpt_%04d.bin", epoch);
        return std::string(buf);
    };
    auto save = [&](int epoch) {
        const std::string name = ckpt_name(epoch);
        save_checkpoint(out_dir + "/" + name, net);
        man.outputs.push_back(name);
    };

    int last_saved = -1;
    if (cfg.checkpoint_every > 0) {
        save(0);  // initial state, so alignment growth is visible from epoch 0
        last_saved = 0;
    }
    std::vector<MetricsRecord> records;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        MetricsRecord rec = train_epoch(net, data, train_count, cfg, train_rng, epoch);
        std::printf("epoch %3d  train_err %.4f  val_err %.4f  loss %.5f  (%.1fs)\n", rec.epoch,
                    rec.train_err, rec.val_err, rec.train_loss, rec.wall_seconds);
        std::fflush(stdout);
        records.push_back(std::move(rec));
        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            save(epoch + 1);
            last_saved = epoch + 1;
        }
    }
    if (last_saved != cfg.epochs) save(cfg.epochs);

    write_metrics_csv(out_dir + "/metrics.csv", corr_layers, records);
    man.outputs.push_back("metrics.csv");
    man.finished = utc_timestamp_now();
    write_manifest(man);
    return 0;
}

// --- flag parsing helpers -----------------------------------------------------------

namespace {

struct Flag {
    std::string key, value;
};

// split args into --key=value flags and bare positionals
void split_args(const std::vector<std::string>& args, std::vector<Flag>& flags,
                std::vector<std::string>& positional) {
    for (const auto& a : args) {
        if (a.rfind("--", 0) == 0) {
            const std::size_t eq = a.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("flag '" + a + "' needs =value");
            flags.push_back({a.substr(2, eq - 2), a.substr(eq + 1)});
        } else {
            positional.push_back(a);
        }
    }
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

double flag_double(const Flag& f) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(f.value, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != f.value.size())
        throw std::runtime_error("flag --" + f.key + " expects a number, got '" + f.value + "'");
    return v;
}

int flag_int(const Flag& f) {
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(f.value, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != f.value.size())
        throw std::runtime_error("flag --" + f.key + " expects an integer, got '" + f.value +
                                 "'");
    return static_cast<int>(v);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

// --- train --------------------------------------------------------------------------

int cmd_train(const std::vector<std::string>& args) {
    try {
        std::vector<Flag> flags;
        std::vector<std::string> positional;
        split_args(args, flags, positional);
        if (positional.size() > 1)
            throw std::runtime_error("train takes at most one config file argument");

        std::string out_dir = "runs/train";
        std::vector<std::string> modes;
        std::string text = positional.empty() ? std::string() : read_text_file(positional[0]);
        // flags append as config lines so later settings win and the
        // mode-dependent loss default resolves the same way as in files
        for (const auto& f : flags) {
            if (f.key == "out") out_dir = f.value;
            else if (f.key == "modes") modes = split_commas(f.value);
            else text += "\n" + f.key + "=" + f.value;
        }

        if (modes.empty()) {
            return run_training(parse_config_text(text), out_dir);
        }
        int rc = 0;
        for (const auto& m : modes) {
            const ExperimentConfig cfg = parse_config_text(text + "\nmode=" + m);
            rc = std::max(rc, run_training(cfg, out_dir + "/" + m));
        }
        return rc;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

// --- lindyn -------------------------------------------------------------------------

namespace {

// scalar initial data for the convergence-rate comparison; feedback scales
// decay fast enough down the stack that faster-with-eps ordering is in force
ScalarSystem rate_base(int k) {
    ScalarSystem s;
    s.k = k;
    s.lambda_T = 0.9;
    s.lambda.assign(static_cast<std::size_t>(k), 0.0);
    s.lambda_R.assign(static_cast<std::size_t>(k), 0.0);
    const double scales[] = {0.10, 0.08, 0.05, 0.03};
    for (int i = 0; i < k; ++i) s.lambda_R[static_cast<std::size_t>(i)] = scales[i % 4];
    return s;
}

}  // namespace

int cmd_lindyn(const std::vector<std::string>& args) {
    try {
        std::vector<Flag> flags;
        std::vector<std::string> positional;
        split_args(args, flags, positional);
        if (!positional.empty())
            throw std::runtime_error("lindyn takes flags only (--k, --eps, --dt, ...)");

        ReplicationConfig rc;
        std::string out_dir = "runs/lindyn";
        int rate_iters = 2000000;
        bool eps_given = false, bp_given = false;
        bool include_bp = true;
        for (const auto& f : flags) {
            if (f.key == "out") out_dir = f.value;
            else if (f.key == "k") rc.k = flag_int(f);
            else if (f.key == "dt") rc.dt = flag_double(f);
            else if (f.key == "iters") rc.iters = flag_int(f);
            else if (f.key == "tol") rc.tol_frac = flag_double(f);
            else if (f.key == "record-every") rc.record_every = flag_int(f);
            else if (f.key == "seed") rc.seed = static_cast<std::uint64_t>(flag_int(f));
            else if (f.key == "rate-iters") rate_iters = flag_int(f);
            else if (f.key == "bp") {
                include_bp = flag_int(f) != 0;
                bp_given = true;
            } else if (f.key == "eps") {
                rc.eps_list.clear();
                for (const auto& tok : split_commas(f.value))
                    rc.eps_list.push_back(flag_double({f.key, tok}));
                if (rc.eps_list.empty()) throw std::runtime_error("--eps needs at least one value");
                eps_given = true;
            } else {
                throw std::runtime_error("unknown lindyn flag --" + f.key);
            }
        }
        // an explicit eps selection asks for exactly those curves
        if (eps_given && !bp_given) include_bp = false;
        rc.include_bp = include_bp;

        RunManifest man;
        man.command = "lindyn";
        man.seed = rc.seed;
        man.code_version = kVersion;
        man.output_dir = out_dir;
        man.started = utc_timestamp_now();
        {
            std::ostringstream cfg;
            cfg << "k=" << rc.k << "\ndt=" << rc.dt << "\niters=" << rc.iters
                << "\ntol_frac=" << rc.tol_frac << "\nrecord_every=" << rc.record_every
                << "\nseed=" << rc.seed << "\ninclude_bp=" << (rc.include_bp ? "true" : "false")
                << "\nrate_iters=" << rate_iters << "\neps=";
            for (std::size_t i = 0; i < rc.eps_list.size(); ++i)
                cfg << (i ? "," : "") << rc.eps_list[i];
            man.config_text = cfg.str();
        }
        fs::create_directories(out_dir);

        std::vector<ReplicationRun> runs;
        try {
            runs = replicate_sim(rc);
        } catch (const std::runtime_error& e) {
            std::fprintf(stderr, "error: %s\nhint: rerun with --dt=%g\n", e.what(), rc.dt / 2);
            return 1;
        }

        // trajectory table
        {
            std::ofstream f(out_dir + "/trajectories.csv", std::ios::binary);
            if (!f) throw std::runtime_error("cannot open trajectories.csv");
            f << "run,eps,iteration,e2";
            for (int i = 1; i <= rc.k; ++i) f << ",corr_l" << i;
            f << '\n';
            for (const auto& r : runs)
                for (std::size_t j = 0; j < r.trace.iters.size(); ++j) {
                    f << r.name << ',' << fmt_g(r.eps) << ',' << r.trace.iters[j] << ','
                      << fmt_g(r.trace.err2[j]);
                    for (double c : r.trace.corr[j]) f << ',' << fmt_g(c);
                    f << '\n';
                }
        }
        man.outputs.push_back("trajectories.csv");

        for (const auto& r : runs) {
            const auto& t = r.trace;
            const std::string fp =
                t.first_passage < 0 ? "never" : std::to_string(t.first_passage);
            std::printf("%-9s e2 %.3e -> %.3e  first_passage %s\n", r.name.c_str(), t.err2_0,
                        t.err2.empty() ? t.err2_0 : t.err2.back(), fp.c_str());
        }

        // convergence-rate comparison on the decoupled scalar flow
        const RateReport rep =
            rate_monotonicity(rate_base(rc.k), rc.eps_list, rc.dt, rate_iters, rc.tol_frac);
        {
            std::ofstream f(out_dir + "/rate_report.csv", std::ios::binary);
            if (!f) throw std::runtime_error("cannot open rate_report.csv");
            f << "eps,first_passage,never_slower,strictly_faster\n";
            for (std::size_t i = 0; i < rep.eps.size(); ++i)
                f << fmt_g(rep.eps[i]) << ',' << rep.first_passage[i] << ','
                  << (rep.never_slower ? 1 : 0) << ',' << (rep.strictly_faster ? 1 : 0) << '\n';
        }
        man.outputs.push_back("rate_report.csv");
        std::printf("scalar rate check: never_slower=%s strictly_faster=%s\n",
                    rep.never_slower ? "yes" : "no", rep.strictly_faster ? "yes" : "no");

        // quick-look panels: log error on top, one correlation panel per layer
        std::vector<plot::Panel> panels(static_cast<std::size_t>(rc.k) + 1);
        panels[0].title = "log10 squared error vs iteration";
        panels[0].y_label = "log10 e2";
        for (int layer = 1; layer <= rc.k; ++layer) {
            panels[static_cast<std::size_t>(layer)].title =
                "feedback correlation, layer " + std::to_string(layer);
            panels[static_cast<std::size_t>(layer)].y_label = "corr";
        }
        for (std::size_t ri = 0; ri < runs.size(); ++ri) {
            const auto& t = runs[ri].trace;
            plot::Series err;
            err.label = runs[ri].name;
            err.color = plot::default_color(ri);
            for (std::size_t j = 0; j < t.iters.size(); ++j) {
                err.x.push_back(t.iters[j]);
                err.y.push_back(std::log10(std::max(t.err2[j], 1e-300)));
            }
            panels[0].series.push_back(std::move(err));
            for (int layer = 1; layer <= rc.k; ++layer) {
                plot::Series s;
                s.label = runs[ri].name;
                s.color = plot::default_color(ri);
                for (std::size_t j = 0; j < t.iters.size(); ++j) {
                    s.x.push_back(t.iters[j]);
                    s.y.push_back(t.corr[j][static_cast<std::size_t>(layer - 1)]);
                }
                panels[static_cast<std::size_t>(layer)].series.push_back(std::move(s));
            }
        }
        plot::render_panels(out_dir + "/lindyn.png", panels);
        man.outputs.push_back("lindyn.png");

        man.finished = utc_timestamp_now();
        write_manifest(man);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

// --- circuit ------------------------------------------------------------------------

namespace {

// expected teaching signal for a unit with drive h and side s (+1 the labeled
// class, -1 any other): +1 below the margin, -mu inside the wrong-side
// margin, 0 otherwise
double margin_delta(double h, int s, double S, double mu) {
    if (s > 0) return h <= S ? 1.0 : 0.0;
    return h >= -S ? -mu : 0.0;
}

struct GridFailure {
    std::string check;
    double a = 0.0, b = 0.0;  // (h, s) or (x, delta)
    double got = 0.0, expected = 0.0;
};

}  // namespace

int cmd_circuit(const std::vector<std::string>& args) {
    try {
        std::vector<Flag> flags;
        std::vector<std::string> positional;
        split_args(args, flags, positional);
        if (!positional.empty()) throw std::runtime_error("circuit takes flags only");

        std::string out_dir = "runs/circuit";
        std::string trace_spec;
        double grid_step = 0.05;
        int trace_steps = 4;
        OutputCircuit proto;
        for (const auto& f : flags) {
            if (f.key == "out") out_dir = f.value;
            else if (f.key == "trace") trace_spec = f.value;
            else if (f.key == "grid-step") grid_step = flag_double(f);
            else if (f.key == "trace-steps") trace_steps = flag_int(f);
            else if (f.key == "perturb-t") proto.t_hi = flag_double(f);
            else throw std::runtime_error("unknown circuit flag --" + f.key);
        }
        if (!(grid_step > 0)) throw std::runtime_error("--grid-step must be positive");

        RunManifest man;
        man.command = "circuit";
        man.code_version = kVersion;
        man.output_dir = out_dir;
        man.started = utc_timestamp_now();
        {
            std::ostringstream cfg;
            cfg << "grid_step=" << grid_step << "\nt_hi=" << proto.t_hi
                << "\ntrace=" << trace_spec << "\ntrace_steps=" << trace_steps;
            man.config_text = cfg.str();
        }
        fs::create_directories(out_dir);

        if (!trace_spec.empty()) {
            // e.g. --trace=h=2,s=1 : show the raw two-phase state sequence
            OutputCircuit c = proto;
            bool have_h = false, have_s = false;
            for (const auto& tok : split_commas(trace_spec)) {
                const std::size_t eq = tok.find('=');
                if (eq == std::string::npos)
                    throw std::runtime_error("--trace expects h=<value>,s=<+-1>");
                const std::string k = tok.substr(0, eq);
                const double v = flag_double({k, tok.substr(eq + 1)});
                if (k == "h") {
                    c.h = v;
                    have_h = true;
                } else if (k == "s") {
                    c.s = static_cast<int>(v);
                    have_s = true;
                } else {
                    throw std::runtime_error("--trace expects h=<value>,s=<+-1>");
                }
            }
            if (!have_h || !have_s) throw std::runtime_error("--trace expects h=<value>,s=<+-1>");

            std::ofstream f(out_dir + "/trace.csv", std::ios::binary);
            if (!f) throw std::runtime_error("cannot open trace.csv");
            f << "step,delta,t\n";
            std::printf("step  delta      t\n");
            for (int n = 1; n <= trace_steps; ++n) {
                c = output_circuit_step(c);
                f << n << ',' << fmt_g(c.delta) << ',' << fmt_g(c.t) << '\n';
                std::printf("%4d  %8.4g  %4.1f\n", n, c.delta, c.t);
            }
            man.outputs.push_back("trace.csv");
            man.finished = utc_timestamp_now();
            write_manifest(man);
            return 0;
        }

        // exhaustive grid checks of both circuits against their closed forms
        std::vector<GridFailure> failures;
        const int n_out = static_cast<int>(std::lround(proto.M / grid_step));
        long out_cases = 0;
        for (int i = -n_out; i <= n_out; ++i) {
            const double h = std::clamp(i * grid_step, -proto.M, proto.M);
            for (int s : {1, -1}) {
                OutputCircuit c = proto;
                c.h = h;
                c.s = s;
                const double got = output_circuit_effective(c);
                const double want = margin_delta(h, s, proto.S, proto.mu);
                ++out_cases;
                if (got != want) failures.push_back({"output_delta", h, double(s), got, want});
            }
        }
        const long out_failures = static_cast<long>(failures.size());

        ShutdownCircuit sd;
        const int n_x = n_out;
        const int n_d = static_cast<int>(std::lround(2.0 / grid_step));
        long sd_cases = 0;
        for (int i = -n_x; i <= n_x; ++i) {
            const double x = std::clamp(i * grid_step, -proto.M, proto.M);
            for (int j = -n_d; j <= n_d; ++j) {
                const double delta = j * grid_step;
                sd.x = x;
                const double got = shutdown_step(sd, delta);
                const double want = std::abs(x) < 1.0 ? delta : 0.0;
                ++sd_cases;
                if (got != want) failures.push_back({"shutdown_gate", x, delta, got, want});
            }
        }
        const long sd_failures = static_cast<long>(failures.size()) - out_failures;

        {
            std::ofstream f(out_dir + "/report.csv", std::ios::binary);
            if (!f) throw std::runtime_error("cannot open report.csv");
            f << "check,cases,counterexamples,equivalent\n";
            f << "output_delta," << out_cases << ',' << out_failures << ','
              << (out_failures == 0 ? 1 : 0) << '\n';
            f << "shutdown_gate," << sd_cases << ',' << sd_failures << ','
              << (sd_failures == 0 ? 1 : 0) << '\n';
        }
        man.outputs.push_back("report.csv");
        {
            std::ofstream f(out_dir + "/counterexamples.csv", std::ios::binary);
            if (!f) throw std::runtime_error("cannot open counterexamples.csv");
            f << "check,input_a,input_b,got,expected\n";
            std::size_t listed = 0;
            for (const auto& fail : failures) {
                if (++listed > 200) break;  // keep the artifact small on a bad day
                f << fail.check << ',' << fmt_g(fail.a) << ',' << fmt_g(fail.b) << ','
                  << fmt_g(fail.got) << ',' << fmt_g(fail.expected) << '\n';
            }
        }
        man.outputs.push_back("counterexamples.csv");

        std::printf("output circuit:   %ld cases, %ld counterexamples -> %s\n", out_cases,
                    out_failures, out_failures == 0 ? "equivalent" : "NOT equivalent");
        std::printf("shutdown circuit: %ld cases, %ld counterexamples -> %s\n", sd_cases,
                    sd_failures, sd_failures == 0 ? "equivalent" : "NOT equivalent");
        if (!failures.empty())
            std::printf("first counterexample: %s (%g, %g) got %g expected %g\n",
                        failures[0].check.c_str(), failures[0].a, failures[0].b, failures[0].got,
                        failures[0].expected);

        man.finished = utc_timestamp_now();
        write_manifest(man);
        return failures.empty() ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

// --- align --------------------------------------------------------------------------

int cmd_align(const std::vector<std::string>& args) {
    try {
        std::vector<Flag> flags;
        std::vector<std::string> positional;
        split_args(args, flags, positional);
        if (positional.size() != 1)
            throw std::runtime_error("align takes exactly one checkpoint directory");
        const std::string dir = positional[0];
        std::string out_dir = "runs/align";
        for (const auto& f : flags) {
            if (f.key == "out") out_dir = f.value;
            else throw std::runtime_error("unknown align flag --" + f.key);
        }

        if (!fs::is_directory(dir))
            throw std::runtime_error("checkpoint directory '" + dir + "' does not exist");
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".bin")
                files.push_back(entry.path().filename().string());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw std::runtime_error("no checkpoints (*.bin) found in '" + dir + "'");

        RunManifest man;
        man.command = "align";
        man.code_version = kVersion;
        man.output_dir = out_dir;
        man.started = utc_timestamp_now();
        man.config_text = "checkpoint_dir=" + dir;
        fs::create_directories(out_dir);

        std::ofstream f(out_dir + "/alignment.csv", std::ios::binary);
        if (!f) throw std::runtime_error("cannot open alignment.csv");
        f << "checkpoint,layer,correlation\n";

        std::vector<std::string> header_layers;
        for (const auto& name : files) {
            const auto aligns = checkpoint_alignment(load_checkpoint(dir + "/" + name));
            if (header_layers.empty()) {
                for (const auto& a : aligns) header_layers.push_back(a.layer);
                std::printf("%-16s", "checkpoint");
                for (const auto& l : header_layers) std::printf("  %16s", l.c_str());
                std::printf("\n");
            }
            std::printf("%-16s", name.c_str());
            for (const auto& a : aligns) {
                f << name << ',' << a.layer << ',' << fmt_g(a.corr) << '\n';
                std::printf("  %16.6f", a.corr);
            }
            std::printf("\n");
        }
        man.outputs.push_back("alignment.csv");

        man.finished = utc_timestamp_now();
        write_manifest(man);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace urfb
