#include "urfb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace urfb {

namespace {

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                     std::istreambuf_iterator<char>());
}

// *.bin files of `dir`; `preferred` first if present (e.g. data_batch_*)
std::vector<std::string> bin_files(const std::string& dir, const std::string& prefix) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("dataset directory '" + dir + "' does not exist");
    std::vector<std::string> preferred, all;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".bin") continue;
        all.push_back(entry.path().string());
        if (entry.path().filename().string().rfind(prefix, 0) == 0)
            preferred.push_back(entry.path().string());
    }
    std::sort(preferred.begin(), preferred.end());
    std::sort(all.begin(), all.end());
    if (!preferred.empty()) return preferred;
    if (all.empty()) throw std::runtime_error("no .bin files in '" + dir + "'");
    return all;
}

Dataset parse_cifar(const std::vector<std::uint8_t>& bytes, const std::string& what,
                    int label_bytes, int classes) {
    const std::size_t record = static_cast<std::size_t>(label_bytes) + 3072;
    if (bytes.size() % record != 0)
        throw std::runtime_error(what + ": size " + std::to_string(bytes.size()) +
                                 " is not a multiple of the " + std::to_string(record) +
                                 "-byte record (truncated file?)");
    const std::size_t n = bytes.size() / record;
    Dataset ds;
    ds.classes = classes;
    ds.shape = FeatShape::image(3, 32, 32);
    ds.X = Tensor({n, 3072});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + i * record;
        ds.labels[i] = rec[label_bytes - 1];  // last label byte (fine label for cifar100)
        double* row = ds.X.data() + i * 3072;
        for (std::size_t p = 0; p < 3072; ++p) row[p] = rec[label_bytes + p] / 255.0;
    }
    return ds;
}

Dataset concat(std::vector<Dataset> parts) {
    if (parts.empty()) throw std::runtime_error("no dataset parts");
    std::size_t total = 0;
    for (const Dataset& p : parts) total += p.size();
    Dataset out;
    out.classes = parts[0].classes;
    out.shape = parts[0].shape;
    out.X = Tensor({total, static_cast<std::size_t>(parts[0].shape.flat_size())});
    out.labels.reserve(total);
    std::size_t row = 0;
    for (const Dataset& p : parts) {
        std::memcpy(out.X.data() + row * p.shape.flat_size(), p.X.data(),
                    sizeof(double) * p.X.size());
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        row += p.size();
    }
    return out;
}

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16), std::uint8_t(v >> 8),
                         std::uint8_t(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_cifar10_file(const std::string& path) {
    return parse_cifar(read_all(path), path, 1, 10);
}

Dataset load_cifar10(const std::string& dir) {
    std::vector<Dataset> parts;
    for (const std::string& f : bin_files(dir, "data_batch_")) parts.push_back(load_cifar10_file(f));
    return concat(std::move(parts));
}

Dataset load_cifar100_file(const std::string& path) {
    return parse_cifar(read_all(path), path, 2, 100);
}

Dataset load_cifar100(const std::string& dir) {
    std::vector<Dataset> parts;
    for (const std::string& f : bin_files(dir, "train")) parts.push_back(load_cifar100_file(f));
    return concat(std::move(parts));
}

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
    auto ib = read_all(images_path);
    auto lb = read_all(labels_path);
    if (ib.size() < 16) throw std::runtime_error(images_path + ": truncated IDX header");
    if (lb.size() < 8) throw std::runtime_error(labels_path + ": truncated IDX header");
    if (read_be32(ib.data()) != 0x00000803u)
        throw std::runtime_error(images_path + ": bad IDX image magic");
    if (read_be32(lb.data()) != 0x00000801u)
        throw std::runtime_error(labels_path + ": bad IDX label magic");
    const std::size_t n = read_be32(ib.data() + 4);
    const std::size_t rows = read_be32(ib.data() + 8);
    const std::size_t cols = read_be32(ib.data() + 12);
    if (read_be32(lb.data() + 4) != n)
        throw std::runtime_error(labels_path + ": label count does not match image count");
    if (ib.size() != 16 + n * rows * cols)
        throw std::runtime_error(images_path + ": size does not match header (truncated file?)");
    if (lb.size() != 8 + n)
        throw std::runtime_error(labels_path + ": size does not match header (truncated file?)");
    Dataset ds;
    ds.classes = 10;
    ds.shape = FeatShape::image(1, static_cast<int>(rows), static_cast<int>(cols));
    ds.X = Tensor({n, rows * cols});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = lb[8 + i];
        double* row = ds.X.data() + i * rows * cols;
        const std::uint8_t* src = ib.data() + 16 + i * rows * cols;
        for (std::size_t p = 0; p < rows * cols; ++p) row[p] = src[p] / 255.0;
    }
    return ds;
}

Dataset load_mnist(const std::string& dir) {
    return load_idx_pair((fs::path(dir) / "train-images-idx3-ubyte").string(),
                         (fs::path(dir) / "train-labels-idx1-ubyte").string());
}

void write_cifar10(const std::string& path, const std::vector<std::uint8_t>& labels,
                   const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != labels.size() * 3072)
        throw std::invalid_argument("write_cifar10: pixels must be 3072 bytes per label");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        f.put(static_cast<char>(labels[i]));
        f.write(reinterpret_cast<const char*>(pixels.data() + i * 3072), 3072);
    }
}

void write_cifar100(const std::string& path, const std::vector<std::uint8_t>& coarse,
                    const std::vector<std::uint8_t>& fine,
                    const std::vector<std::uint8_t>& pixels) {
    if (coarse.size() != fine.size() || pixels.size() != fine.size() * 3072)
        throw std::invalid_argument("write_cifar100: inconsistent record counts");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    for (std::size_t i = 0; i < fine.size(); ++i) {
        f.put(static_cast<char>(coarse[i]));
        f.put(static_cast<char>(fine[i]));
        f.write(reinterpret_cast<const char*>(pixels.data() + i * 3072), 3072);
    }
}

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      int n, int rows, int cols) {
    if (pixels.size() != static_cast<std::size_t>(n) * rows * cols)
        throw std::invalid_argument("write_idx_images: pixel count does not match n*rows*cols");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    write_be32(f, 0x00000803u);
    write_be32(f, static_cast<std::uint32_t>(n));
    write_be32(f, static_cast<std::uint32_t>(rows));
    write_be32(f, static_cast<std::uint32_t>(cols));
    f.write(reinterpret_cast<const char*>(pixels.data()), pixels.size());
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    write_be32(f, 0x00000801u);
    write_be32(f, static_cast<std::uint32_t>(labels.size()));
    f.write(reinterpret_cast<const char*>(labels.data()), labels.size());
}

Dataset toy_blobs(Rng& rng, int per_class, int classes, int dim, double separation) {
    if (per_class < 1 || classes < 1 || dim < 1)
        throw std::invalid_argument("toy_blobs: bad sizes");
    // centers drawn uniformly in a box wide enough that rejection terminates
    const double side = separation * std::max(2.0, static_cast<double>(classes));
    std::vector<std::vector<double>> centers;
    for (int c = 0; c < classes; ++c) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000)
                throw std::runtime_error("toy_blobs: could not place separated centers");
            std::vector<double> cand(dim);
            for (double& v : cand) v = rng.uniform(0.0, side);
            bool ok = true;
            for (const auto& other : centers) {
                double d2 = 0.0;
                for (int i = 0; i < dim; ++i) d2 += (cand[i] - other[i]) * (cand[i] - other[i]);
                if (d2 < separation * separation) { ok = false; break; }
            }
            if (ok) { centers.push_back(std::move(cand)); break; }
        }
    }
    Dataset ds;
    ds.classes = classes;
    ds.shape = FeatShape::flat(dim);
    const std::size_t n = static_cast<std::size_t>(per_class) * classes;
    ds.X = Tensor({n, static_cast<std::size_t>(dim)});
    ds.labels.resize(n);
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c)
        for (int s = 0; s < per_class; ++s, ++row) {
            ds.labels[row] = c;
            double* x = ds.X.data() + row * dim;
            for (int i = 0; i < dim; ++i) x[i] = centers[c][i] + rng.normal();
        }
    return ds;
}

SynthImages make_synth_images(Rng& rng, int n, int classes, int c, int h, int w,
                              double noise_sd) {
    if (n < 0 || classes < 1) throw std::invalid_argument("make_synth_images: bad sizes");
    const std::size_t flat = static_cast<std::size_t>(c) * h * w;
    // class templates: a few random low-frequency waves per channel
    std::vector<std::vector<double>> tmpl(classes, std::vector<double>(flat, 0.0));
    for (int cls = 0; cls < classes; ++cls)
        for (int ch = 0; ch < c; ++ch) {
            double fy1 = rng.uniform(0.5, 2.0), fx1 = rng.uniform(0.5, 2.0);
            double fy2 = rng.uniform(1.0, 3.0), fx2 = rng.uniform(1.0, 3.0);
            double py = rng.uniform(0.0, 2.0 * M_PI), px = rng.uniform(0.0, 2.0 * M_PI);
            double a2 = rng.uniform(0.3, 0.7);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double u = 2.0 * M_PI * y / h, v = 2.0 * M_PI * x / w;
                    tmpl[cls][(static_cast<std::size_t>(ch) * h + y) * w + x] =
                        std::cos(fy1 * u + px) * std::cos(fx1 * v + py) +
                        a2 * std::sin(fy2 * u + py) * std::cos(fx2 * v + px);
                }
        }
    SynthImages out;
    out.labels.resize(n);
    out.pixels.resize(static_cast<std::size_t>(n) * flat);
    for (int i = 0; i < n; ++i) {
        const int cls = static_cast<int>(rng.next_u64() % classes);
        out.labels[i] = static_cast<std::uint8_t>(cls);
        std::uint8_t* px = out.pixels.data() + static_cast<std::size_t>(i) * flat;
        for (std::size_t p = 0; p < flat; ++p) {
            double v = 128.0 + 55.0 * tmpl[cls][p] + noise_sd * rng.normal();
            px[p] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return out;
}

Dataset synth_dataset(Rng& rng, int n, double noise_sd) {
    SynthImages si = make_synth_images(rng, n, 10, 3, 32, 32, noise_sd);
    Dataset ds;
    ds.classes = 10;
    ds.shape = FeatShape::image(3, 32, 32);
    ds.X = Tensor({static_cast<std::size_t>(n), 3072});
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        ds.labels[i] = si.labels[i];
        double* row = ds.X.data() + static_cast<std::size_t>(i) * 3072;
        for (std::size_t p = 0; p < 3072; ++p)
            row[p] = si.pixels[static_cast<std::size_t>(i) * 3072 + p] / 255.0;
    }
    return ds;
}

Tensor gather_rows(const Tensor& X, const std::vector<int>& order, int begin, int end) {
    if (begin < 0 || end < begin || static_cast<std::size_t>(end) > order.size())
        throw std::invalid_argument("gather_rows: bad range");
    const std::size_t flat = X.dim(1);
    Tensor out({static_cast<std::size_t>(end - begin), flat});
    for (int i = begin; i < end; ++i) {
        const int src = order[i];
        if (src < 0 || static_cast<std::size_t>(src) >= X.dim(0))
            throw std::invalid_argument("gather_rows: index out of range");
        std::memcpy(out.data() + static_cast<std::size_t>(i - begin) * flat,
                    X.data() + static_cast<std::size_t>(src) * flat, sizeof(double) * flat);
    }
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& order,
                               int begin, int end) {
    std::vector<int> out;
    out.reserve(end - begin);
    for (int i = begin; i < end; ++i) out.push_back(labels[order[i]]);
    return out;
}

}  // namespace urfb
