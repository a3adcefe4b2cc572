#include "gatelab/config.hpp"

#include <set>

#include "gatelab/error.hpp"
#include "gatelab/report.hpp"

namespace gatelab {

using nlohmann::json;

std::string_view to_string(Experiment e) noexcept {
    switch (e) {
    case Experiment::Toy: return "toy";
    case Experiment::StrictVsLoose: return "strict-vs-loose";
    case Experiment::Train: return "train";
    case Experiment::SweepTau: return "sweep-tau";
    case Experiment::SweepAlpha: return "sweep-alpha";
    case Experiment::MassDyn: return "massdyn";
    case Experiment::GradCheck: return "gradcheck";
    }
    return "unknown";
}

Experiment parse_experiment(std::string_view text) {
    for (Experiment e : {Experiment::Toy, Experiment::StrictVsLoose, Experiment::Train,
                         Experiment::SweepTau, Experiment::SweepAlpha, Experiment::MassDyn,
                         Experiment::GradCheck})
        if (to_string(e) == text) return e;
    throw Error(ErrorKind::UsageError, "unknown experiment '" + std::string(text) + "'");
}

namespace {

// Reads optional keys from one JSON object and complains about leftovers.
class Block {
public:
    Block(const json& j, std::string path) : path_(std::move(path)) {
        if (j.is_null()) return;
        if (!j.is_object()) throw Error(ErrorKind::InvalidInput, "config: '" + path_ + "' must be an object");
        obj_ = &j;
    }

    bool has(const char* key) const { return obj_ && obj_->contains(key) && !(*obj_)[key].is_null(); }

    const json& raw(const char* key) {
        seen_.insert(key);
        static const json null_json;
        return has(key) ? (*obj_)[key] : null_json;
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!has(key)) return;
        try {
            out = (*obj_)[key].get<T>();
        } catch (const json::exception&) {
            throw Error(ErrorKind::InvalidInput, "config: bad value for '" + where(key) + "'");
        }
    }

    std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        if (!obj_) return;
        for (const auto& [k, v] : obj_->items())
            if (!seen_.count(k))
                throw Error(ErrorKind::InvalidInput, "config: unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }

private:
    const json* obj_ = nullptr;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<toy::Label> labels_from(const json& j, const std::string& where) {
    if (!j.is_array()) throw Error(ErrorKind::InvalidInput, "config: '" + where + "' must be an array");
    std::vector<toy::Label> out;
    for (const auto& v : j) {
        if (!v.is_string() || v.get<std::string>().size() != 1)
            throw Error(ErrorKind::InvalidInput, "config: '" + where + "' entries are single letters");
        out.push_back(toy::parse_label(v.get<std::string>()[0]));
    }
    return out;
}

json labels_to(const std::vector<toy::Label>& labels) {
    json out = json::array();
    for (auto l : labels) out.push_back(std::string(1, toy::to_char(l)));
    return out;
}

} // namespace

void RunConfig::validate() const {
    if (threads < 1) throw Error(ErrorKind::UsageError, "threads must be >= 1");
    if (epochs < 0) throw Error(ErrorKind::InvalidInput, "epochs must be >= 0");
    loss.validate();
    optimizer.validate();
    if (dataset.train_path.empty()) dataset.synthetic.validate();
    if (!(dataset.eval_fraction >= 0.0 && dataset.eval_fraction < 1.0))
        throw Error(ErrorKind::InvalidInput, "dataset.eval_fraction must lie in [0, 1)");
    if (gradcheck.pairs < 1 || gradcheck.param_batches < 0)
        throw Error(ErrorKind::InvalidInput, "gradcheck sizes must be positive");
    if (!(gradcheck.h >= 1e-7 && gradcheck.h <= 1e-3))
        throw Error(ErrorKind::InvalidInput, "gradcheck.h must lie in [1e-7, 1e-3]");
    if (!massdyn.policies.empty() && massdyn.reference_checkpoint.empty())
        throw Error(ErrorKind::InvalidInput, "massdyn.policies needs massdyn.reference");
}

RunConfig resolve_config(const json& input) {
    RunConfig c;
    Block top(input, "");

    std::string experiment = std::string(to_string(c.experiment));
    top.get("experiment", experiment);
    c.experiment = parse_experiment(experiment);
    top.get("seed", c.seed);
    top.get("threads", c.threads);
    top.get("output_dir", c.output_dir);

    // objective first: beta and gate defaults depend on it
    Block obj(top.raw("objective"), "objective");
    std::string name = "dpo";
    bool gated = false;
    obj.get("name", name);
    obj.get("gated", gated);
    Block gate(top.raw("gate"), "gate");
    std::string stat = "seq_mean";
    gate.get("statistic", stat);
    c.loss = LossConfig::defaults_for(parse_objective(name), gated, parse_gate_statistic(stat));
    obj.get("beta", c.loss.beta);
    obj.get("caldpo_beta_in_sigmoid", c.loss.caldpo_beta_in_sigmoid);
    obj.finish();
    gate.get("tau", c.loss.gate.tau);
    gate.get("alpha", c.loss.gate.alpha);
    gate.get("q", c.loss.gate.q);
    gate.finish();

    Block opt(top.raw("optimizer"), "optimizer");
    std::string kind = std::string(lm::to_string(c.optimizer.kind));
    opt.get("kind", kind);
    c.optimizer.kind = lm::parse_optimizer(kind);
    opt.get("lr", c.optimizer.lr);
    opt.get("rmsprop_decay", c.optimizer.rmsprop_decay);
    opt.get("rmsprop_eps", c.optimizer.rmsprop_eps);
    opt.get("batch_size", c.optimizer.batch_size);
    opt.get("epochs", c.epochs);
    opt.finish();

    Block ds(top.raw("dataset"), "dataset");
    ds.get("train_path", c.dataset.train_path);
    ds.get("eval_path", c.dataset.eval_path);
    ds.get("reference_checkpoint", c.dataset.reference_checkpoint);
    ds.get("eval_fraction", c.dataset.eval_fraction);
    Block syn(ds.raw("synthetic"), "dataset.synthetic");
    auto& s = c.dataset.synthetic;
    syn.get("vocab", s.vocab);
    syn.get("num_pairs", s.num_pairs);
    syn.get("prompt_len", s.prompt_len);
    syn.get("response_len", s.response_len);
    syn.get("valley_fraction", s.valley_fraction);
    syn.get("eval_fraction", s.eval_fraction);
    syn.get("support", s.support);
    syn.get("dominant_weight", s.dominant_weight);
    syn.get("sft_epochs", s.sft_epochs);
    syn.get("sft_lr", s.sft_lr);
    syn.finish();
    ds.finish();

    Block ty(top.raw("toy"), "toy");
    auto& d = c.toy.defaults;
    ty.get("small_k", d.small_k);
    ty.get("large_k", d.large_k);
    ty.get("eta_magnitude", d.eta_magnitude);
    ty.get("steps", d.steps);
    ty.get("feature_dim", d.d);
    ty.get("alpha", d.alpha);
    ty.get("loose_tau_small_k", d.loose_tau_small_k);
    ty.get("loose_tau_large_k", d.loose_tau_large_k);
    ty.get("strict_tau_small_k", d.strict_tau_small_k);
    ty.get("strict_tau_large_k", d.strict_tau_large_k);
    ty.get("peak_mass", d.peak_mass);
    ty.get("valley_target", d.valley_target);
    ty.get("valley_argmax", d.valley_argmax);
    ty.get("large_target", d.large_target);
    ty.get("large_argmax", d.large_argmax);
    if (ty.has("scenarios")) c.toy.scenarios = labels_from(ty.raw("scenarios"), "toy.scenarios");
    else ty.raw("scenarios");
    if (ty.has("strict_vs_loose"))
        c.toy.strict_vs_loose = labels_from(ty.raw("strict_vs_loose"), "toy.strict_vs_loose");
    else ty.raw("strict_vs_loose");
    ty.finish();

    Block sw(top.raw("sweep"), "sweep");
    sw.get("tau_grid", c.sweep.tau_grid);
    sw.get("alpha_grid", c.sweep.alpha_grid);
    sw.finish();

    Block md(top.raw("massdyn"), "massdyn");
    md.get("variants", c.massdyn.variants_path);
    md.get("reference", c.massdyn.reference_checkpoint);
    md.get("canonical_only", c.massdyn.canonical_only);
    md.get("destructive_others", c.massdyn.destructive_others);
    const json& pols = md.raw("policies");
    if (!pols.is_null()) {
        if (!pols.is_array()) throw Error(ErrorKind::InvalidInput, "config: 'massdyn.policies' must be an array");
        for (const auto& p : pols) {
            Block pb(p, "massdyn.policies[]");
            PolicyEntry e;
            pb.get("name", e.name);
            pb.get("checkpoint", e.checkpoint);
            pb.finish();
            if (e.checkpoint.empty())
                throw Error(ErrorKind::InvalidInput, "config: massdyn policy without checkpoint");
            if (e.name.empty()) e.name = e.checkpoint;
            c.massdyn.policies.push_back(std::move(e));
        }
    }
    md.finish();

    Block gc(top.raw("gradcheck"), "gradcheck");
    gc.get("pairs", c.gradcheck.pairs);
    gc.get("h", c.gradcheck.h);
    gc.get("scalar_threshold", c.gradcheck.scalar_threshold);
    gc.get("param_threshold", c.gradcheck.param_threshold);
    gc.get("param_batches", c.gradcheck.param_batches);
    gc.get("non_detached", c.gradcheck.non_detached);
    gc.get("single_pair", c.gradcheck.single_pair);
    gc.finish();

    top.finish();
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::InvalidInput, "config " + path.string() + ": " + e.what());
    }
    return resolve_config(j);
}

json to_json(const RunConfig& c) {
    json j;
    j["experiment"] = std::string(to_string(c.experiment));
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["output_dir"] = c.output_dir;
    j["objective"] = {{"name", std::string(to_string(c.loss.objective))},
                      {"gated", c.loss.gated},
                      {"beta", c.loss.beta},
                      {"caldpo_beta_in_sigmoid", c.loss.caldpo_beta_in_sigmoid}};
    j["gate"] = {{"statistic", std::string(to_string(c.loss.gate.statistic))},
                 {"tau", c.loss.gate.tau},
                 {"alpha", c.loss.gate.alpha},
                 {"q", c.loss.gate.q}};
    j["optimizer"] = {{"kind", std::string(lm::to_string(c.optimizer.kind))},
                      {"lr", c.optimizer.lr},
                      {"rmsprop_decay", c.optimizer.rmsprop_decay},
                      {"rmsprop_eps", c.optimizer.rmsprop_eps},
                      {"batch_size", c.optimizer.batch_size},
                      {"epochs", c.epochs}};
    const auto& s = c.dataset.synthetic;
    j["dataset"] = {{"train_path", c.dataset.train_path},
                    {"eval_path", c.dataset.eval_path},
                    {"reference_checkpoint", c.dataset.reference_checkpoint},
                    {"eval_fraction", c.dataset.eval_fraction},
                    {"synthetic",
                     {{"vocab", s.vocab},
                      {"num_pairs", s.num_pairs},
                      {"prompt_len", s.prompt_len},
                      {"response_len", s.response_len},
                      {"valley_fraction", s.valley_fraction},
                      {"eval_fraction", s.eval_fraction},
                      {"support", s.support},
                      {"dominant_weight", s.dominant_weight},
                      {"sft_epochs", s.sft_epochs},
                      {"sft_lr", s.sft_lr}}}};
    const auto& d = c.toy.defaults;
    j["toy"] = {{"small_k", d.small_k},
                {"large_k", d.large_k},
                {"eta_magnitude", d.eta_magnitude},
                {"steps", d.steps},
                {"feature_dim", d.d},
                {"alpha", d.alpha},
                {"loose_tau_small_k", d.loose_tau_small_k},
                {"loose_tau_large_k", d.loose_tau_large_k},
                {"strict_tau_small_k", d.strict_tau_small_k},
                {"strict_tau_large_k", d.strict_tau_large_k},
                {"peak_mass", d.peak_mass},
                {"valley_target", d.valley_target},
                {"valley_argmax", d.valley_argmax},
                {"large_target", d.large_target},
                {"large_argmax", d.large_argmax},
                {"scenarios", labels_to(c.toy.scenarios)},
                {"strict_vs_loose", labels_to(c.toy.strict_vs_loose)}};
    j["sweep"] = {{"tau_grid", c.sweep.tau_grid}, {"alpha_grid", c.sweep.alpha_grid}};
    json pols = json::array();
    for (const auto& p : c.massdyn.policies) pols.push_back({{"name", p.name}, {"checkpoint", p.checkpoint}});
    j["massdyn"] = {{"variants", c.massdyn.variants_path},
                    {"reference", c.massdyn.reference_checkpoint},
                    {"policies", pols},
                    {"canonical_only", c.massdyn.canonical_only},
                    {"destructive_others", c.massdyn.destructive_others}};
    j["gradcheck"] = {{"pairs", c.gradcheck.pairs},
                      {"h", c.gradcheck.h},
                      {"scalar_threshold", c.gradcheck.scalar_threshold},
                      {"param_threshold", c.gradcheck.param_threshold},
                      {"param_batches", c.gradcheck.param_batches},
                      {"non_detached", c.gradcheck.non_detached},
                      {"single_pair", c.gradcheck.single_pair}};
    return j;
}

} // namespace gatelab
