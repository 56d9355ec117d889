#include "train/checkpoint.hpp"

#include "common/binio.hpp"
#include "common/error.hpp"

#include <cstring>

namespace attnmix::train {

namespace {
constexpr char kMagic[8] = {'A', 'M', 'X', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;
} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    io::Writer w;
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kMagic), 8));
    w.u32(kVersion);

    w.u64(static_cast<uint64_t>(ckpt.hyper.dim));
    w.u64(static_cast<uint64_t>(ckpt.hyper.levels));
    w.u64(static_cast<uint64_t>(ckpt.hyper.heads));
    w.f64(ckpt.hyper.sigma);
    w.f64(ckpt.hyper.p);
    w.str(model::variant_token(ckpt.hyper.variant));
    w.u64(static_cast<uint64_t>(ckpt.vocab_items));
    w.u64(ckpt.vocab_hash);
    w.u64(static_cast<uint64_t>(ckpt.epoch));
    w.f64(ckpt.val_mrr20);
    w.u64(ckpt.seed);
    if (ckpt.config_json.size() > 0xFFFFFF) raise(Errc::invalid_argument, "config echo too large");
    w.u32(static_cast<uint32_t>(ckpt.config_json.size()));
    w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(ckpt.config_json.data()),
                                     ckpt.config_json.size()));

    uint32_t arrays = 0;
    ckpt.params.for_each([&arrays](const std::string&, const num::Tensor&) { ++arrays; });
    w.u32(arrays);
    ckpt.params.for_each([&w](const std::string& name, const num::Tensor& t) {
        w.str(name);
        w.u8(static_cast<uint8_t>(t.rank()));
        for (int64_t e : t.shape) w.u64(static_cast<uint64_t>(e));
        for (double x : t.v) w.f64(x);
    });

    w.u64(io::fnv1a(w.buffer()));
    io::write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::vector<uint8_t> buf = io::read_file(path);
    if (buf.size() < 20) raise(Errc::corrupt_checkpoint, path + ": not a checkpoint");
    uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<uint64_t>(buf[buf.size() - 8 + i]) << (8 * i);
    if (stored != io::fnv1a(std::span<const uint8_t>(buf.data(), buf.size() - 8)))
        raise(Errc::corrupt_checkpoint, path + ": content hash mismatch");

    io::Reader r(buf);
    std::vector<uint8_t> magic = r.bytes(8);
    if (std::memcmp(magic.data(), kMagic, 8) != 0)
        raise(Errc::corrupt_checkpoint, path + ": bad magic");
    uint32_t version = r.u32();
    if (version != kVersion)
        raise(Errc::version_mismatch,
              path + ": checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kVersion));

    Checkpoint ck;
    ck.version = version;
    ck.hyper.dim = static_cast<int64_t>(r.u64());
    ck.hyper.levels = static_cast<int64_t>(r.u64());
    ck.hyper.heads = static_cast<int64_t>(r.u64());
    ck.hyper.sigma = r.f64();
    ck.hyper.p = r.f64();
    ck.hyper.variant = model::variant_from_token(r.str());
    ck.vocab_items = static_cast<int64_t>(r.u64());
    ck.vocab_hash = r.u64();
    ck.epoch = static_cast<int64_t>(r.u64());
    ck.val_mrr20 = r.f64();
    ck.seed = r.u64();
    uint32_t cfg_len = r.u32();
    std::vector<uint8_t> cfg = r.bytes(cfg_len);
    ck.config_json.assign(cfg.begin(), cfg.end());

    uint32_t arrays = r.u32();
    num::NamedTensors named;
    for (uint32_t a = 0; a < arrays; ++a) {
        std::string name = r.str();
        uint8_t rank = r.u8();
        std::vector<int64_t> shape(rank);
        for (auto& e : shape) e = static_cast<int64_t>(r.u64());
        num::Tensor t = num::Tensor::zeros(shape);
        for (double& x : t.v) x = r.f64();
        named.emplace(std::move(name), std::move(t));
    }
    ck.params = model::ModelParams::from_named(named, ck.hyper);
    return ck;
}

} // namespace attnmix::train
