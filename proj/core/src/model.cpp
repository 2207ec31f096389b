#include "svlr/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace svlr {

namespace {
constexpr char kCheckpointMagic[] = "SVLRCKPT1";
}

std::string share_mode_str(ShareMode m) {
    return m == ShareMode::kSvlr ? "svlr" : "multitask";
}

ShareMode share_mode_from(const std::string& s) {
    if (s == "svlr") return ShareMode::kSvlr;
    if (s == "multitask") return ShareMode::kMultitask;
    throw ParseError("unknown sharing mode '" + s + "'");
}

ModelConfig ModelConfig::paper_scale() {
    ModelConfig c;
    c.word_dim = 300;
    c.region_dim = 2048;
    c.hidden_dim = 2048;
    c.embed_dim = 300;
    c.bimodal_dim = 2500;
    return c;
}

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    order_.push_back(name);
    t.set_requires_grad(true);
    return params_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw LookupError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw LookupError("unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::add_bn_state(const std::string& name, std::size_t dim) {
    if (bn_.count(name)) throw ContractError("duplicate batch-norm state '" + name + "'");
    bn_order_.push_back(name);
    bn_.emplace(name, BatchNormState::init(dim));
}

BatchNormState& ParamStore::bn_state(const std::string& name) {
    auto it = bn_.find(name);
    if (it == bn_.end()) throw LookupError("unknown batch-norm state '" + name + "'");
    return it->second;
}

const BatchNormState& ParamStore::bn_state(const std::string& name) const {
    auto it = bn_.find(name);
    if (it == bn_.end()) throw LookupError("unknown batch-norm state '" + name + "'");
    return it->second;
}

void ParamStore::zero_grads() {
    for (const auto& name : order_) params_.at(name).zero_grad();
}

std::size_t ParamStore::total_parameters() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += params_.at(name).numel();
    return n;
}

Tensor xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> data(fan_in * fan_out);
    for (auto& v : data) v = rng.uniform(-a, a);
    return Tensor::from({fan_in, fan_out}, std::move(data));
}

namespace {

void add_affine(ParamStore& p, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    p.add(prefix + ".w", xavier_init(in, out, rng));
    p.add(prefix + ".b", Tensor::zeros({out}));
}

void add_bn_layer(ParamStore& p, const std::string& prefix, std::size_t dim) {
    p.add(prefix + ".scale", Tensor::from({dim}, std::vector<double>(dim, 1.0)));
    p.add(prefix + ".offset", Tensor::zeros({dim}));
    p.add_bn_state(prefix, dim);
}

}  // namespace

Model init_model(const ModelConfig& config, const Ontology& ont, std::uint64_t seed) {
    Model model;
    model.config = config;
    Rng rng(seed);
    ParamStore& p = model.params;

    add_affine(p, "g.l1", config.word_dim, config.embed_dim, rng);
    add_affine(p, "g.l2", config.embed_dim, config.embed_dim, rng);

    for (const char* head : {"fo", "fa"}) {
        const std::string h(head);
        add_affine(p, h + ".l1", config.region_dim, config.hidden_dim, rng);
        add_bn_layer(p, h + ".bn1", config.hidden_dim);
        add_affine(p, h + ".l2", config.hidden_dim, config.embed_dim, rng);
        add_bn_layer(p, h + ".bn2", config.embed_dim);
    }

    const std::size_t img_dim = config.image_feature_dim(ont);
    p.add("vqa.w1", xavier_init(img_dim, config.bimodal_dim, rng));
    add_bn_layer(p, "vqa.bn1", config.bimodal_dim);
    p.add("vqa.w2", xavier_init(config.qa_feature_dim(), config.bimodal_dim, rng));
    add_bn_layer(p, "vqa.bn2", config.bimodal_dim);
    p.add("vqa.w3", xavier_init(config.bimodal_dim, 1, rng));

    p.add("cls.h_obj", xavier_init(ont.objects.size(), config.embed_dim, rng));
    p.add("cls.h_atr", xavier_init(ont.attributes.size(), config.embed_dim, rng));

    return model;
}

Tensor embed_words(const std::vector<WordId>& ids, const Vocabulary& vocab, Model& model) {
    if (ids.empty()) throw ContractError("embed_words: empty id list");
    std::vector<std::vector<double>> rows;
    rows.reserve(ids.size());
    for (WordId id : ids) {
        if (id >= vocab.size()) throw LookupError("missing word id " + std::to_string(id));
        rows.push_back(vocab.base(id));
    }
    const Tensor base = Tensor::from_rows(rows);  // frozen inputs
    ParamStore& p = model.params;
    Tensor h = relu(add_row(matmul(base, p.at("g.l1.w")), p.at("g.l1.b")));
    return add_row(matmul(h, p.at("g.l2.w")), p.at("g.l2.b"));
}

Tensor embed_word(WordId id, const Vocabulary& vocab, Model& model) {
    return row(embed_words({id}, vocab, model), 0);
}

Tensor embed_regions(const Tensor& features, Head head, Model& model, NetMode mode) {
    if (features.ndim() != 2 || features.cols() != model.config.region_dim) {
        throw DimError("embed_regions: expected [B x " + std::to_string(model.config.region_dim) +
                       "] features, got " + shape_str(features.shape()));
    }
    const std::string h = head == Head::kObject ? "fo" : "fa";
    ParamStore& p = model.params;
    Tensor x = add_row(matmul(features, p.at(h + ".l1.w")), p.at(h + ".l1.b"));
    x = relu(batch_norm(x, p.at(h + ".bn1.scale"), p.at(h + ".bn1.offset"), p.bn_state(h + ".bn1"), mode));
    x = add_row(matmul(x, p.at(h + ".l2.w")), p.at(h + ".l2.b"));
    return relu(batch_norm(x, p.at(h + ".bn2.scale"), p.at(h + ".bn2.offset"), p.bn_state(h + ".bn2"), mode));
}

Tensor embed_region(const std::vector<double>& features, Head head, Model& model, NetMode mode) {
    const Tensor batch = Tensor::from({1, features.size()}, features);
    return row(embed_regions(batch, head, model, mode), 0);
}

Tensor class_vectors(const std::vector<WordId>& ids, const Vocabulary& vocab,
                     const Ontology& ont, Model& model) {
    for (WordId id : ids) {
        if (!ont.is_object(id) && !ont.is_attribute(id)) {
            throw LookupError("missing category " + std::to_string(id));
        }
    }
    if (model.config.mode == ShareMode::kSvlr) {
        return embed_words(ids, vocab, model);
    }
    std::vector<Tensor> rows;
    rows.reserve(ids.size());
    for (WordId id : ids) {
        if (ont.is_object(id)) {
            rows.push_back(row(model.params.at("cls.h_obj"), ont.object_index(id)));
        } else {
            rows.push_back(row(model.params.at("cls.h_atr"), ont.attribute_index(id)));
        }
    }
    return stack_rows(rows);
}

namespace {

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::ifstream& in, const std::string& file) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw ParseError(file + ": truncated checkpoint");
    }
    return v;
}

void write_string(std::ofstream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& file) {
    const std::uint64_t n = read_u64(in, file);
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw ParseError(file + ": truncated checkpoint");
    }
    return s;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, const std::string& file) {
    const std::uint64_t n = read_u64(in, file);
    std::vector<double> v(n);
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
        throw ParseError(file + ": truncated checkpoint");
    }
    return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error("cannot open " + file.string() + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    write_string(out, share_mode_str(model.config.mode));
    write_u64(out, model.config.word_dim);
    write_u64(out, model.config.region_dim);
    write_u64(out, model.config.hidden_dim);
    write_u64(out, model.config.embed_dim);
    write_u64(out, model.config.bimodal_dim);

    write_u64(out, model.params.names().size());
    for (const auto& name : model.params.names()) {
        const Tensor& t = model.params.at(name);
        write_string(out, name);
        write_u64(out, t.ndim());
        for (std::size_t i = 0; i < t.ndim(); ++i) write_u64(out, t.extent(i));
        write_doubles(out, t.data());
    }
    write_u64(out, model.params.bn_names().size());
    for (const auto& name : model.params.bn_names()) {
        const BatchNormState& s = model.params.bn_state(name);
        write_string(out, name);
        write_doubles(out, s.running_mean);
        write_doubles(out, s.running_var);
    }
}

Model load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot open " + file.string());
    const std::string fname = file.string();
    char magic[sizeof(kCheckpointMagic) - 1];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw ParseError(fname + ": not a checkpoint file (bad magic)");
    }
    Model model;
    model.config.mode = share_mode_from(read_string(in, fname));
    model.config.word_dim = read_u64(in, fname);
    model.config.region_dim = read_u64(in, fname);
    model.config.hidden_dim = read_u64(in, fname);
    model.config.embed_dim = read_u64(in, fname);
    model.config.bimodal_dim = read_u64(in, fname);

    const std::uint64_t n_params = read_u64(in, fname);
    for (std::uint64_t i = 0; i < n_params; ++i) {
        const std::string name = read_string(in, fname);
        const std::uint64_t ndim = read_u64(in, fname);
        Shape shape(ndim);
        for (auto& e : shape) e = read_u64(in, fname);
        model.params.add(name, Tensor::from(shape, read_doubles(in, fname)));
    }
    const std::uint64_t n_bn = read_u64(in, fname);
    for (std::uint64_t i = 0; i < n_bn; ++i) {
        const std::string name = read_string(in, fname);
        auto mean = read_doubles(in, fname);
        auto var = read_doubles(in, fname);
        model.params.add_bn_state(name, mean.size());
        model.params.bn_state(name).running_mean = std::move(mean);
        model.params.bn_state(name).running_var = std::move(var);
    }
    return model;
}

}  // namespace svlr
