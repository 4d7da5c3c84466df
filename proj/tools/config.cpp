#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "laplab/error.hpp"
#include "laplab/random.hpp"

namespace laplab::cli {

namespace {

class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
    }

    bool has(const std::string& k) const { return j_.contains(k); }

    double number(const std::string& k, std::optional<double> def = {}) {
        if (!has(k)) return require(k, def);
        const Json& v = take(k);
        if (!v.is_number()) fail(k, "expected a number");
        return v.get<double>();
    }

    // Number or "a/b" string.
    double fraction(const std::string& k) {
        if (!has(k)) fail(k, "required key missing");
        const Json& v = take(k);
        if (v.is_number()) return v.get<double>();
        if (!v.is_string()) fail(k, "expected a number or \"a/b\"");
        try {
            return parse_fraction(v.get<std::string>());
        } catch (const ConfigError& e) {
            fail(k, e.what());
        }
    }

    std::size_t count(const std::string& k, std::optional<std::size_t> def = {}) {
        if (!has(k)) return require(k, def);
        const Json& v = take(k);
        if (!v.is_number_unsigned()) fail(k, "expected a non-negative integer");
        return v.get<std::size_t>();
    }

    std::string text(const std::string& k, std::optional<std::string> def = {}) {
        if (!has(k)) return require(k, def);
        const Json& v = take(k);
        if (!v.is_string()) fail(k, "expected a string");
        return v.get<std::string>();
    }

    bool flag(const std::string& k, std::optional<bool> def = {}) {
        if (!has(k)) return require(k, def);
        const Json& v = take(k);
        if (!v.is_boolean()) fail(k, "expected true or false");
        return v.get<bool>();
    }

    std::vector<double> numbers(const std::string& k, std::vector<double> def) {
        if (!has(k)) return def;
        const Json& v = take(k);
        if (!v.is_array()) fail(k, "expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail(k, "expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    const Json& array(const std::string& k) {
        if (!has(k)) fail(k, "required key missing");
        const Json& v = take(k);
        if (!v.is_array()) fail(k, "expected an array");
        return v;
    }

    Reader object(const std::string& k) {
        if (!has(k)) fail(k, "required section missing");
        return Reader(take(k), where(k));
    }

    std::optional<Reader> maybe_object(const std::string& k) {
        if (!has(k)) return std::nullopt;
        return Reader(take(k), where(k));
    }

    void done() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) fail(k, "unknown key");
    }

    std::string where(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

    [[noreturn]] void fail(const std::string& k, const std::string& msg) const {
        throw ConfigError(where(k) + ": " + msg);
    }

private:
    const Json& take(const std::string& k) {
        used_.insert(k);
        return j_.at(k);
    }

    template <class T>
    T require(const std::string& k, const std::optional<T>& def) const {
        if (!def) fail(k, "required key missing");
        return *def;
    }

    const Json& j_;
    std::string path_;
    std::set<std::string> used_;
};

DatasetConfig read_dataset(Reader r) {
    DatasetConfig d;
    d.kind = r.text("kind");
    if (d.kind == "bars-vs-checkers" || d.kind == "gaussian-blobs") {
        d.synthetic.kind = *parse_synthetic_kind(d.kind);
        d.n_train = r.count("n_train", 2000);
        d.n_test = r.count("n_test", 500);
        d.synthetic.size = r.count("size", 16);
        d.synthetic.noise_std = r.number("noise_std", 0.3);
        d.synthetic.amplitude = r.number("amplitude", 0.4);
        d.synthetic.class_offset = r.number("class_offset", 0.0);
        d.synthetic.classes = r.count("classes", 2);
        d.synthetic.seed = r.count("seed", 0);
        if (d.n_train == 0 || d.n_test == 0) r.fail("n_train", "split sizes must be >= 1");
    } else if (d.kind == "idx") {
        d.train_images = r.text("train_images");
        d.train_labels = r.text("train_labels");
        d.test_images = r.text("test_images");
        d.test_labels = r.text("test_labels");
        if (r.has("classes")) d.classes = r.count("classes");
    } else if (d.kind == "csv") {
        d.train_csv = r.text("train");
        d.test_csv = r.text("test");
        d.channels = r.count("channels", 1);
        if (r.has("classes")) d.classes = r.count("classes");
    } else {
        r.fail("kind", "unknown dataset kind '" + d.kind + "'");
    }
    r.done();
    return d;
}

LayerSpec read_layer(Reader r) {
    const std::string type = r.text("type");
    LayerSpec l;
    if (type == "conv2d") {
        l = LayerSpec::conv2d(r.count("out"), r.count("kernel"), r.count("stride", 1), r.count("padding", 0));
    } else if (type == "dense") {
        l = LayerSpec::dense(r.count("out"));
    } else if (type == "relu") {
        l = LayerSpec::relu();
    } else if (type == "avgpool2") {
        l = LayerSpec::avg_pool2();
    } else if (type == "flatten") {
        l = LayerSpec::flatten();
    } else {
        r.fail("type", "unknown layer type '" + type + "'");
    }
    r.done();
    return l;
}

ModelConfig read_model(Reader r) {
    ModelConfig m;
    m.kind = r.text("kind");
    if (m.kind == "mlp") {
        for (double h : r.numbers("hidden", {})) {
            if (h < 1 || h != std::floor(h)) r.fail("hidden", "widths must be positive integers");
            m.hidden.push_back(static_cast<std::size_t>(h));
        }
    } else if (m.kind == "layers") {
        const Json& arr = r.array("layers");
        for (std::size_t i = 0; i < arr.size(); ++i)
            m.layers.push_back(read_layer(Reader(arr[i], r.where("layers") + "[" + std::to_string(i) + "]")));
    } else if (m.kind != "desk-cnn") {
        r.fail("kind", "unknown model kind '" + m.kind + "'");
    }
    r.done();
    return m;
}

TrainConfig read_train(Reader r) {
    TrainConfig t;
    t.epochs = r.count("epochs", 30);
    t.batch_size = r.count("batch_size", 128);
    t.sgd.momentum = r.number("momentum", 0.9);
    t.sgd.weight_decay = r.number("weight_decay", 5e-4);
    t.seed = r.count("seed", 0);
    t.augment = r.flag("augment", true);
    Reader lr = r.object("lr");
    const std::string kind = lr.text("kind");
    if (kind == "cyclic") {
        t.lr = LrSchedule::cyclic(lr.number("max_lr"), lr.number("peak_epoch"), static_cast<double>(t.epochs));
    } else if (kind == "piecewise") {
        t.lr = LrSchedule::piecewise(lr.number("initial_lr"), lr.numbers("milestones", {}), lr.number("decay", 10.0));
    } else {
        lr.fail("kind", "expected cyclic or piecewise");
    }
    lr.done();
    if (auto e = r.maybe_object("eval")) {
        t.eval.pgd_steps = e->count("pgd_steps", 10);
        t.eval.pgd_restarts = e->count("pgd_restarts", 1);
        t.eval.final_pgd_steps = e->count("final_pgd_steps", 50);
        t.eval.final_pgd_restarts = e->count("final_pgd_restarts", 10);
        t.eval.final_eval = e->flag("final_eval", true);
        if (e->has("epsilon")) t.eval.epsilon = e->fraction("epsilon");
        e->done();
    }
    r.done();
    try {
        t.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    return t;
}

AttackConfig read_attack(Reader r) {
    const std::string name = r.text("variant");
    const auto v = parse_attack_variant(name);
    if (!v) r.fail("variant", "unknown attack variant '" + name + "'");
    AttackConfig a = AttackConfig::for_variant(*v, r.fraction("epsilon"));
    if (r.has("alpha")) a.alpha = r.fraction("alpha");
    if (*v == AttackVariant::Pgd) {
        a.steps = r.count("steps", 10);
        a.restarts = r.count("restarts", 1);
    }
    a.clamp_input = r.flag("clamp_input", true);
    r.done();
    try {
        a.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("attack: ") + e.what());
    }
    return a;
}

ProbeConfig read_probe(Reader r) {
    ProbeConfig p;
    p.examples = r.count("examples", 200);
    p.landscape.half_width = r.number("half_width", 1.0);
    p.landscape.resolution = r.count("resolution", 21);
    p.landscape.seed = r.count("direction_seed", 11);
    if (auto pr = r.maybe_object("prune")) {
        const std::string sel = pr->text("selection", "largest");
        const auto s = parse_prune_selection(sel);
        if (!s) pr->fail("selection", "expected random, smallest or largest");
        p.prune = {pr->count("lo", 1), pr->count("hi", 2), *s, pr->number("rate", 0.15), pr->count("seed", 0)};
        pr->done();
    }
    p.bound_delta = r.number("bound_delta", 0.05);
    p.bound_tries = r.count("bound_tries", 8);
    r.done();
    if (p.examples == 0) throw ConfigError("probe.examples: must be >= 1");
    if (p.landscape.resolution < 3 || p.landscape.resolution % 2 == 0)
        throw ConfigError("probe.resolution: must be odd and >= 3");
    if (!(p.landscape.half_width > 0.0)) throw ConfigError("probe.half_width: must be > 0");
    if (!(p.prune.rate >= 0.0 && p.prune.rate <= 1.0)) throw ConfigError("probe.prune.rate: must be in [0, 1]");
    if (!(p.bound_delta > 0.0 && p.bound_delta < 1.0)) throw ConfigError("probe.bound_delta: must be in (0, 1)");
    if (p.bound_tries == 0) throw ConfigError("probe.bound_tries: must be >= 1");
    return p;
}

std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

Json layer_json(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Conv2d:
            return {{"type", "conv2d"}, {"out", l.out}, {"kernel", l.kernel}, {"stride", l.stride}, {"padding", l.padding}};
        case LayerKind::Dense:
            return {{"type", "dense"}, {"out", l.out}};
        case LayerKind::Relu:
            return {{"type", "relu"}};
        case LayerKind::AvgPool2:
            return {{"type", "avgpool2"}};
        case LayerKind::Flatten:
            return {{"type", "flatten"}};
    }
    return {};
}

}  // namespace

double parse_fraction(const std::string& s) {
    auto to_num = [&](const std::string& t) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != t.size() || !std::isfinite(v)) throw ConfigError("cannot parse '" + s + "' as a number");
        return v;
    };
    const auto slash = s.find('/');
    if (slash == std::string::npos) return to_num(s);
    const double den = to_num(s.substr(slash + 1));
    if (den == 0.0) throw ConfigError("zero denominator in '" + s + "'");
    return to_num(s.substr(0, slash)) / den;
}

ExperimentConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError("JSON syntax error at " + line_col(text, e.byte) + ": " + e.what());
    }
    Reader r(j, "");
    ExperimentConfig c;
    c.dataset = read_dataset(r.object("dataset"));
    c.model = read_model(r.object("model"));
    c.train = read_train(r.object("train"));
    c.attack = read_attack(r.object("attack"));
    Reader p = r.object("perturb");
    const std::string mode = p.text("mode");
    const auto m = parse_perturb_mode(mode);
    if (!m) p.fail("mode", "unknown perturbation mode '" + mode + "'");
    c.perturb_mode = *m;
    c.beta = p.number("beta");
    c.gamma = p.number("gamma");
    p.done();
    try {
        PerturbSchedule(c.perturb_mode, c.beta, c.gamma, 1);
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("perturb: ") + e.what());
    }
    if (auto pr = r.maybe_object("probe")) c.probe = read_probe(*pr);
    if (auto o = r.maybe_object("output")) {
        c.out_dir = o->text("dir", "runs");
        c.run_name = o->text("name", "run");
        o->done();
    }
    r.done();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

Json ExperimentConfig::resolved() const {
    Json j;
    Json& d = j["dataset"];
    d["kind"] = dataset.kind;
    if (dataset.kind == "idx") {
        d["train_images"] = dataset.train_images;
        d["train_labels"] = dataset.train_labels;
        d["test_images"] = dataset.test_images;
        d["test_labels"] = dataset.test_labels;
        if (dataset.classes) d["classes"] = *dataset.classes;
    } else if (dataset.kind == "csv") {
        d["train"] = dataset.train_csv;
        d["test"] = dataset.test_csv;
        d["channels"] = dataset.channels;
        if (dataset.classes) d["classes"] = *dataset.classes;
    } else {
        const auto& s = dataset.synthetic;
        d["n_train"] = dataset.n_train;
        d["n_test"] = dataset.n_test;
        d["size"] = s.size;
        d["noise_std"] = s.noise_std;
        d["amplitude"] = s.amplitude;
        d["class_offset"] = s.class_offset;
        d["classes"] = s.classes;
        d["seed"] = s.seed;
    }

    Json& m = j["model"];
    m["kind"] = model.kind;
    if (model.kind == "mlp") m["hidden"] = model.hidden;
    if (model.kind == "layers") {
        m["layers"] = Json::array();
        for (const auto& l : model.layers) m["layers"].push_back(layer_json(l));
    }

    Json& t = j["train"];
    t["epochs"] = train.epochs;
    t["batch_size"] = train.batch_size;
    t["momentum"] = train.sgd.momentum;
    t["weight_decay"] = train.sgd.weight_decay;
    t["seed"] = train.seed;
    t["augment"] = train.augment;
    if (train.lr.kind == LrSchedule::Kind::Cyclic) {
        t["lr"] = {{"kind", "cyclic"}, {"max_lr", train.lr.max_lr}, {"peak_epoch", train.lr.peak_epoch}};
    } else {
        t["lr"] = {{"kind", "piecewise"},
                   {"initial_lr", train.lr.initial_lr},
                   {"milestones", train.lr.milestones},
                   {"decay", train.lr.decay}};
    }
    Json& e = t["eval"];
    e["pgd_steps"] = train.eval.pgd_steps;
    e["pgd_restarts"] = train.eval.pgd_restarts;
    e["final_pgd_steps"] = train.eval.final_pgd_steps;
    e["final_pgd_restarts"] = train.eval.final_pgd_restarts;
    e["final_eval"] = train.eval.final_eval;
    if (train.eval.epsilon) e["epsilon"] = *train.eval.epsilon;

    Json& a = j["attack"];
    a["variant"] = attack_variant_name(attack.variant);
    a["epsilon"] = attack.epsilon;
    a["alpha"] = attack.alpha;
    if (attack.variant == AttackVariant::Pgd) {
        a["steps"] = attack.steps;
        a["restarts"] = attack.restarts;
    }
    a["clamp_input"] = attack.clamp_input;

    j["perturb"] = {{"mode", perturb_mode_name(perturb_mode)}, {"beta", beta}, {"gamma", gamma}};
    j["probe"] = {{"examples", probe.examples},
                  {"half_width", probe.landscape.half_width},
                  {"resolution", probe.landscape.resolution},
                  {"direction_seed", probe.landscape.seed},
                  {"prune",
                   {{"selection", prune_selection_name(probe.prune.selection)},
                    {"lo", probe.prune.lo},
                    {"hi", probe.prune.hi},
                    {"rate", probe.prune.rate},
                    {"seed", probe.prune.seed}}},
                  {"bound_delta", probe.bound_delta},
                  {"bound_tries", probe.bound_tries}};
    j["output"] = {{"dir", out_dir}, {"name", run_name}};
    return j;
}

Splits load_splits(const DatasetConfig& d) {
    if (d.kind == "idx")
        return {load_idx(d.train_images, d.train_labels, d.classes), load_idx(d.test_images, d.test_labels, d.classes)};
    if (d.kind == "csv")
        return {load_csv(d.train_csv, d.channels, d.classes), load_csv(d.test_csv, d.channels, d.classes)};
    SyntheticOptions o = d.synthetic;
    o.n = d.n_train;
    o.seed = sub_seed(d.synthetic.seed, 1);
    Splits s{gen_synthetic(o), {}};
    o.n = d.n_test;
    o.seed = sub_seed(d.synthetic.seed, 2);
    s.test = gen_synthetic(o);
    return s;
}

NetSpec model_spec(const ModelConfig& m, const Dataset& sample) {
    const auto shape = sample.image_shape();
    if (m.kind == "desk-cnn") return NetSpec::desk_cnn(shape[0], shape[1], sample.num_classes);
    if (m.kind == "mlp") return NetSpec::mlp(shape[0] * shape[1] * shape[2], m.hidden, sample.num_classes);
    NetSpec s;
    s.input_shape = {shape[0], shape[1], shape[2]};
    s.num_classes = sample.num_classes;
    s.layers = m.layers;
    s.validate();
    return s;
}

Json netspec_json(const NetSpec& spec) {
    Json j;
    j["input_shape"] = spec.input_shape;
    j["num_classes"] = spec.num_classes;
    j["layers"] = Json::array();
    for (const auto& l : spec.layers) j["layers"].push_back(layer_json(l));
    return j;
}

}  // namespace laplab::cli
