#pragma once

// Self-describing binary container for trained models:
//   "MVML" | u32 version | u8 kind | u64 metadata length | metadata JSON |
//   u64 value count | f64 values (little endian) | u64 checksum
// The checksum is 64-bit FNV-1a over every preceding byte. All integers are
// little endian. Metadata is a JSON object with sorted keys, so equal models
// serialize to identical bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "moodveil/common.hpp"
#include "moodveil/io.hpp"
#include "moodveil/models/majority.hpp"
#include "moodveil/models/mlp.hpp"
#include "moodveil/models/svm.hpp"

namespace moodveil::models {

inline constexpr uint32_t kContainerVersion = 1;

enum class ArtifactKind : uint8_t { Majority = 0, Svm = 1, Mlp = 2, NimlpBundle = 3 };

namespace container {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double d) {
    uint64_t bits = 0;
    std::memcpy(&bits, &d, sizeof(bits));
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t at = 0;

    explicit Reader(const std::string& b) : buf(b) {}

    void need(size_t n) const {
        if (at + n > buf.size()) fail("model container: truncated file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[at + static_cast<size_t>(i)])) << (8 * i);
        at += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[at + static_cast<size_t>(i)])) << (8 * i);
        at += 8;
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double d = 0.0;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(at, n);
        at += n;
        return s;
    }
};

inline std::string assemble(ArtifactKind kind, const nlohmann::json& meta,
                            const std::vector<double>& values) {
    std::string out = "MVML";
    put_u32(out, kContainerVersion);
    out.push_back(static_cast<char>(kind));
    std::string meta_str = meta.dump();
    put_u64(out, meta_str.size());
    out += meta_str;
    put_u64(out, values.size());
    for (double v : values) put_f64(out, v);
    put_u64(out, fnv1a64(out));
    return out;
}

struct Parsed {
    ArtifactKind kind;
    nlohmann::json meta;
    std::vector<double> values;
};

inline Parsed parse(const std::string& buf, const std::string& origin) {
    if (buf.size() < 4 + 4 + 1 + 8 + 8 + 8) fail("model container " + origin + ": truncated file");
    uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
        stored |= static_cast<uint64_t>(static_cast<unsigned char>(buf[buf.size() - 8 + static_cast<size_t>(i)])) << (8 * i);
    uint64_t actual = fnv1a64(std::string_view(buf.data(), buf.size() - 8));
    if (stored != actual)
        fail("model container " + origin + ": checksum mismatch (stored " + hex64(stored) +
             ", computed " + hex64(actual) + ")");

    Reader r(buf);
    if (r.bytes(4) != "MVML") fail("model container " + origin + ": bad magic");
    uint32_t version = r.u32();
    if (version != kContainerVersion)
        fail("model container " + origin + ": unsupported version " + std::to_string(version));
    Parsed p;
    r.need(1);
    p.kind = static_cast<ArtifactKind>(static_cast<unsigned char>(buf[r.at++]));
    uint64_t meta_len = r.u64();
    auto meta_str = r.bytes(meta_len);
    p.meta = nlohmann::json::parse(meta_str, nullptr, false);
    if (p.meta.is_discarded()) fail("model container " + origin + ": unparseable metadata");
    uint64_t count = r.u64();
    if (r.at + count * 8 + 8 != buf.size()) fail("model container " + origin + ": length mismatch");
    p.values.reserve(count);
    for (uint64_t i = 0; i < count; ++i) p.values.push_back(r.f64());
    return p;
}

inline Parsed load(const std::string& path, ArtifactKind expected) {
    auto p = parse(read_file(path), path);
    if (p.kind != expected)
        fail("model container " + path + ": kind " + std::to_string(static_cast<int>(p.kind)) +
             ", expected " + std::to_string(static_cast<int>(expected)));
    return p;
}

inline nlohmann::json keys_to_json(const std::vector<uint64_t>& keys) {
    nlohmann::json arr = nlohmann::json::array();
    for (uint64_t k : keys) arr.push_back(hex64(k));
    return arr;
}

inline std::vector<uint64_t> keys_from_json(const nlohmann::json& arr) {
    std::vector<uint64_t> out;
    for (const auto& v : arr) out.push_back(std::stoull(v.get<std::string>(), nullptr, 16));
    return out;
}

}  // namespace container

// --- majority ----------------------------------------------------------------

inline void save_majority(const std::string& path, const MajorityModel& m) {
    nlohmann::json meta;
    meta["modal_class"] = m.modal_class;
    meta["class_counts"] = m.class_counts;
    meta["fit_keys"] = container::keys_to_json(m.fit_keys);
    write_file(path, container::assemble(ArtifactKind::Majority, meta, {}));
}

inline MajorityModel load_majority(const std::string& path) {
    auto p = container::load(path, ArtifactKind::Majority);
    MajorityModel m;
    m.modal_class = p.meta.at("modal_class").get<int>();
    auto counts = p.meta.at("class_counts");
    for (size_t i = 0; i < 3; ++i) m.class_counts[i] = counts.at(i).get<int64_t>();
    m.fit_keys = container::keys_from_json(p.meta.at("fit_keys"));
    return m;
}

// --- svm -----------------------------------------------------------------------

inline void save_svm(const std::string& path, const SvmModel& m) {
    nlohmann::json meta;
    meta["C"] = m.C;
    meta["dim"] = m.dim;
    meta["kernel"] = {{"kind", m.kernel.kind == KernelKind::Rbf ? "rbf" : "poly"},
                      {"gamma", m.kernel.gamma},
                      {"degree", m.kernel.degree}};
    meta["sole_class"] = m.sole_class;
    meta["fit_keys"] = container::keys_to_json(m.fit_keys);
    nlohmann::json pairs = nlohmann::json::array();
    std::vector<double> values;
    for (const auto& pr : m.pairs) {
        pairs.push_back({{"class_pos", pr.class_pos},
                         {"class_neg", pr.class_neg},
                         {"sv_count", pr.support.rows()},
                         {"bias", pr.bias},
                         {"iterations", pr.iterations},
                         {"final_gap", pr.final_gap},
                         {"dual_objective", pr.dual_objective}});
        for (Eigen::Index i = 0; i < pr.support.rows(); ++i)
            for (Eigen::Index j = 0; j < pr.support.cols(); ++j) values.push_back(pr.support(i, j));
        for (Eigen::Index i = 0; i < pr.coef.size(); ++i) values.push_back(pr.coef[i]);
    }
    meta["pairs"] = pairs;
    write_file(path, container::assemble(ArtifactKind::Svm, meta, values));
}

inline SvmModel load_svm(const std::string& path) {
    auto p = container::load(path, ArtifactKind::Svm);
    SvmModel m;
    m.C = p.meta.at("C").get<double>();
    m.dim = p.meta.at("dim").get<Eigen::Index>();
    auto kj = p.meta.at("kernel");
    m.kernel.kind = kj.at("kind").get<std::string>() == "rbf" ? KernelKind::Rbf : KernelKind::Poly;
    m.kernel.gamma = kj.at("gamma").get<double>();
    m.kernel.degree = kj.at("degree").get<int>();
    m.sole_class = p.meta.at("sole_class").get<int>();
    m.fit_keys = container::keys_from_json(p.meta.at("fit_keys"));
    size_t at = 0;
    auto take = [&]() {
        if (at >= p.values.size()) fail("model container " + path + ": payload too short");
        return p.values[at++];
    };
    for (const auto& pj : p.meta.at("pairs")) {
        BinarySvm pr;
        pr.class_pos = pj.at("class_pos").get<int>();
        pr.class_neg = pj.at("class_neg").get<int>();
        pr.bias = pj.at("bias").get<double>();
        pr.iterations = pj.at("iterations").get<int64_t>();
        pr.final_gap = pj.at("final_gap").get<double>();
        pr.dual_objective = pj.at("dual_objective").get<double>();
        auto sv = pj.at("sv_count").get<Eigen::Index>();
        pr.support.resize(sv, m.dim);
        pr.coef.resize(sv);
        for (Eigen::Index i = 0; i < sv; ++i)
            for (Eigen::Index j = 0; j < m.dim; ++j) pr.support(i, j) = take();
        for (Eigen::Index i = 0; i < sv; ++i) pr.coef[i] = take();
        m.pairs.push_back(std::move(pr));
    }
    if (at != p.values.size()) fail("model container " + path + ": payload too long");
    return m;
}

// --- mlp -----------------------------------------------------------------------

inline void save_mlp(const std::string& path, const MlpModel& m) {
    nlohmann::json meta;
    meta["hyper"] = {{"h1", m.hyper.h1},           {"h2", m.hyper.h2},
                     {"dropout", m.hyper.dropout}, {"lr", m.hyper.lr},
                     {"batch", m.hyper.batch},     {"epochs", m.hyper.epochs}};
    meta["seed"] = hex64(m.seed);
    meta["in_dim"] = m.in_dim();
    meta["final_loss"] = m.final_loss;
    meta["fit_keys"] = container::keys_to_json(m.fit_keys);
    Eigen::VectorXd packed = mlp_pack(m);
    std::vector<double> values(packed.data(), packed.data() + packed.size());
    write_file(path, container::assemble(ArtifactKind::Mlp, meta, values));
}

inline MlpModel load_mlp(const std::string& path) {
    auto p = container::load(path, ArtifactKind::Mlp);
    MlpHyper h;
    auto hj = p.meta.at("hyper");
    h.h1 = hj.at("h1").get<int>();
    h.h2 = hj.at("h2").get<int>();
    h.dropout = hj.at("dropout").get<double>();
    h.lr = hj.at("lr").get<double>();
    h.batch = hj.at("batch").get<int>();
    h.epochs = hj.at("epochs").get<int>();
    auto in_dim = p.meta.at("in_dim").get<Eigen::Index>();
    MlpModel m = mlp_init(in_dim, h, 0);
    m.seed = std::stoull(p.meta.at("seed").get<std::string>(), nullptr, 16);
    m.final_loss = p.meta.at("final_loss").get<double>();
    m.fit_keys = container::keys_from_json(p.meta.at("fit_keys"));
    Eigen::VectorXd packed =
        Eigen::Map<const Eigen::VectorXd>(p.values.data(), static_cast<Eigen::Index>(p.values.size()));
    mlp_unpack(m, packed);
    return m;
}

}  // namespace moodveil::models
