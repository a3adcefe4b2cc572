#include "gatelab/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "gatelab/error.hpp"
#include "gatelab/gradcheck.hpp"
#include "gatelab/lm_io.hpp"
#include "gatelab/massdyn.hpp"
#include "gatelab/report.hpp"
#include "gatelab/toy.hpp"

namespace gatelab {

using nlohmann::json;
namespace fs = std::filesystem;

RunDir::RunDir(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_))
        throw Error(ErrorKind::IOError, "cannot create output directory " + dir_.string());
}

void RunDir::write(const std::string& name, std::string_view content) {
    write_file(dir_ / name, content);
    names_.push_back(name);
    digests_.push_back(sha256_hex(content));
    sizes_.push_back(content.size());
}

void RunDir::write_manifest(std::string_view command, const json& config, double wall_seconds,
                            std::string_view status) {
    json files = json::array();
    for (std::size_t i = 0; i < names_.size(); ++i)
        files.push_back({{"path", names_[i]}, {"sha256", digests_[i]}, {"bytes", sizes_[i]}});
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json m = {{"artifact", "gatelab"},
              {"version", kArtifactVersion},
              {"command", std::string(command)},
              {"status", std::string(status)},
              {"finished_utc", stamp},
              {"wall_clock_seconds", wall_seconds},
              {"config", config},
              {"files", files}};
    write_file(dir_ / "manifest.json", m.dump(2) + "\n");
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Common prologue/epilogue of every command.
struct Session {
    const RunConfig& cfg;
    RunDir dir;
    json echo;
    Clock::time_point t0 = Clock::now();

    explicit Session(const RunConfig& c) : cfg(c), dir(c.output_dir), echo(to_json(c)) {
        dir.write("config.resolved.json", echo.dump(2) + "\n");
    }

    int finish(bool ok) {
        dir.write_manifest(to_string(cfg.experiment), echo, seconds_since(t0), ok ? "ok" : "failed");
        return ok ? kExitOk : kExitCheckFailed;
    }
};

std::string slug(std::string s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(c));
        else if (!out.empty() && out.back() != '_') out += '_';
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

int vocab_of(const std::vector<lm::PreferencePair>& pairs) {
    int v = 0;
    for (const auto& p : pairs)
        for (const auto* s : {&p.prompt, &p.chosen, &p.rejected})
            for (int t : *s) v = std::max(v, t + 1);
    return std::max(v, 2);
}

std::vector<std::string> record_cells(const lm::TrainRecord& r) {
    return {cell(r.epoch),
            cell(r.mean_loss),
            cell(r.mean_gate),
            cell(r.gated_fraction),
            cell(r.delta_logpi_chosen),
            cell(r.delta_logpi_rejected),
            cell(r.argmax_mass_delta),
            cell(r.others_mass_delta)};
}

const std::vector<std::string> kRecordHeader = {"epoch",
                                                "mean_loss",
                                                "mean_gate",
                                                "gated_fraction",
                                                "delta_logpi_chosen",
                                                "delta_logpi_rejected",
                                                "argmax_mass_delta",
                                                "others_mass_delta"};

std::string config_line(const RunConfig& cfg) { return to_json(cfg).dump(); }

} // namespace

LoadedData load_data(const RunConfig& cfg) {
    LoadedData d;
    if (cfg.dataset.train_path.empty()) {
        const auto data = lm::make_synthetic_dataset(cfg.dataset.synthetic, cfg.seed);
        d.train = data.train;
        d.eval = data.eval;
        d.reference = lm::initial_model(data, cfg.dataset.synthetic);
        d.synthetic = true;
        return d;
    }
    d.train = lm::load_pairs(cfg.dataset.train_path);
    if (!cfg.dataset.eval_path.empty()) {
        d.eval = lm::load_pairs(cfg.dataset.eval_path);
    } else if (cfg.dataset.eval_fraction > 0.0 && d.train.size() > 1) {
        const auto n = d.train.size();
        const auto n_eval = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(cfg.dataset.eval_fraction * static_cast<double>(n))), 1, n - 1);
        d.eval.assign(d.train.end() - static_cast<std::ptrdiff_t>(n_eval), d.train.end());
        d.train.resize(n - n_eval);
    }
    if (!cfg.dataset.reference_checkpoint.empty()) {
        d.reference = lm::load_checkpoint(cfg.dataset.reference_checkpoint).model;
    } else {
        int vocab = std::max(vocab_of(d.train), vocab_of(d.eval));
        d.reference = lm::sft_initialize(d.train, vocab, 0, cfg.dataset.synthetic.sft_epochs,
                                         cfg.dataset.synthetic.sft_lr);
    }
    for (const auto& p : d.train) lm::validate_pair(p, d.reference.vocab);
    for (const auto& p : d.eval) lm::validate_pair(p, d.reference.vocab);
    return d;
}

int cmd_toy(const RunConfig& cfg, std::ostream& log) {
    Session s(cfg);
    CsvWriter table({"scenario", "mode", "K", "target", "eta", "steps", "tau", "alpha", "gate_value",
                     "p_target_before", "p_target_after", "delta_target", "delta_max",
                     "argmax_mass_change", "entropy_before", "entropy_after"});
    for (toy::Label label : cfg.toy.scenarios) {
        const auto sc = toy::make_scenario(label, cfg.toy.defaults, cfg.seed);
        const auto run = toy::run_scenario(sc);
        const std::string name(1, toy::to_char(label));
        const double tau = sc.gate ? sc.gate->tau : std::nan("");
        const double alpha = sc.gate ? sc.gate->alpha : std::nan("");
        auto add = [&](const char* mode, const toy::ToyDiagnostics& d, const std::vector<double>& after) {
            table.row({name, mode, cell(sc.K), cell(sc.target), cell(sc.eta), cell(sc.steps), cell(tau),
                       cell(alpha), cell(d.gate_value), cell(run.p_before[sc.target]),
                       cell(after[sc.target]), cell(d.delta_target), cell(d.delta_max),
                       cell(d.argmax_mass_change), cell(d.entropy_before), cell(d.entropy_after)});
        };
        add("baseline", run.baseline, run.p_after_baseline);
        add("gated", run.gated, run.p_after_gated);

        CsvWriter dist({"class_index", "p_before", "p_after_baseline", "p_after_gated"});
        for (int k = 0; k < sc.K; ++k)
            dist.row({cell(k), cell(run.p_before[k]), cell(run.p_after_baseline[k]), cell(run.p_after_gated[k])});
        s.dir.write("distributions_" + name + ".csv", dist.str());
        s.dir.write("toy_" + name + ".svg",
                    svg_bar_chart("Scenario " + name + ": " + sc.description,
                                  {{"initial", "#9e9e9e", run.p_before},
                                   {"baseline", "#d62728", run.p_after_baseline},
                                   {"gated", "#1f77b4", run.p_after_gated}},
                                  "class", "probability"));
        log << "scenario " << name << ": gate " << format_double(run.gated.gate_value) << ", baseline delta_max "
            << format_double(run.baseline.delta_max) << ", gated delta_max " << format_double(run.gated.delta_max)
            << "\n";
    }
    s.dir.write("scenarios.csv", table.str());
    return s.finish(true);
}

int cmd_strict_vs_loose(const RunConfig& cfg, std::ostream& log) {
    Session s(cfg);
    CsvWriter table({"scenario", "config", "tau", "gate_value", "delta_target", "delta_max",
                     "argmax_mass_change", "tail_relative_change", "entropy_after"});
    for (toy::Label label : cfg.toy.strict_vs_loose) {
        const auto rep = toy::strict_vs_loose(label, cfg.toy.defaults, cfg.seed);
        const std::string name(1, toy::to_char(label));
        table.row({name, "baseline", cell(std::nan("")), cell(1.0), cell(rep.loose.baseline.delta_target),
                   cell(rep.loose.baseline.delta_max), cell(rep.loose.baseline.argmax_mass_change),
                   cell(rep.baseline_tail_change), cell(rep.loose.baseline.entropy_after)});
        auto add = [&](const char* which, const toy::ScenarioRun& run, double tail) {
            table.row({name, which, cell(run.scenario.gate->tau), cell(run.gated.gate_value),
                       cell(run.gated.delta_target), cell(run.gated.delta_max), cell(run.gated.argmax_mass_change),
                       cell(tail), cell(run.gated.entropy_after)});
        };
        add("loose", rep.loose, rep.loose_tail_change);
        add("strict", rep.strict, rep.strict_tail_change);
        s.dir.write("strict_vs_loose_" + name + ".svg",
                    svg_bar_chart("Scenario " + name + ": loose vs strict gate",
                                  {{"initial", "#9e9e9e", rep.loose.p_before},
                                   {"loose", "#ff7f0e", rep.loose.p_after_gated},
                                   {"strict", "#1f77b4", rep.strict.p_after_gated}},
                                  "class", "probability"));
        log << "scenario " << name << ": loose g " << format_double(rep.loose_gate) << ", strict g "
            << format_double(rep.strict_gate) << ", strict tail change " << format_double(rep.strict_tail_change)
            << "\n";
    }
    s.dir.write("strict_vs_loose.csv", table.str());
    return s.finish(true);
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
    Session s(cfg);
    const LoadedData data = load_data(cfg);
    const std::string cfg_line = config_line(cfg);
    s.dir.write("reference.ckpt", lm::checkpoint_to_string(data.reference, cfg_line));
    if (data.synthetic) {
        s.dir.write("train.jsonl", lm::pairs_to_jsonl(data.train));
        s.dir.write("eval.jsonl", lm::pairs_to_jsonl(data.eval));
        s.dir.write("variants.jsonl",
                    massdyn::variants_to_jsonl(massdyn::make_variant_set(data.eval, data.train,
                                                                         data.reference.vocab, cfg.seed)));
    }
    log << "training " << cfg.loss.label() << " on " << data.train.size() << " pairs, " << cfg.epochs
        << " epochs\n";
    lm::TrainResult result;
    try {
        result = lm::train(data.train, data.eval, data.reference, cfg.loss, cfg.optimizer, cfg.epochs, cfg.threads);
    } catch (const lm::DivergenceError& e) {
        const auto& snap = e.snapshot();
        json j = {{"error", e.what()},
                  {"epoch", snap.epoch},
                  {"batch", snap.batch},
                  {"pair_ids", snap.pair_ids}};
        json losses = json::array();
        for (double l : snap.pair_losses) losses.push_back(format_double(l));
        j["pair_losses"] = losses;
        CsvWriter partial(kRecordHeader);
        for (const auto& r : snap.records) partial.row(record_cells(r));
        s.dir.write("dynamics.csv", partial.str());
        s.dir.write("divergence.json", j.dump(2) + "\n");
        s.dir.write_manifest(to_string(cfg.experiment), s.echo, seconds_since(s.t0), "diverged");
        throw;
    }
    CsvWriter dyn(kRecordHeader);
    std::vector<double> epochs, chosen, rejected, argmax;
    for (const auto& r : result.records) {
        dyn.row(record_cells(r));
        epochs.push_back(r.epoch);
        chosen.push_back(r.delta_logpi_chosen);
        rejected.push_back(r.delta_logpi_rejected);
        argmax.push_back(r.argmax_mass_delta);
        log << "epoch " << r.epoch << ": loss " << format_double(r.mean_loss) << ", d_chosen "
            << format_double(r.delta_logpi_chosen) << ", d_rejected " << format_double(r.delta_logpi_rejected)
            << ", gated " << format_double(r.gated_fraction) << "\n";
    }
    s.dir.write("dynamics.csv", dyn.str());
    s.dir.write("policy.ckpt", lm::checkpoint_to_string(result.policy, cfg_line));
    s.dir.write("dynamics.svg",
                svg_line_chart(cfg.loss.label() + " learning dynamics", epochs,
                               {{"delta log pi chosen", "#2ca02c", chosen},
                                {"delta log pi rejected", "#d62728", rejected},
                                {"argmax mass delta", "#1f77b4", argmax}},
                               "epoch", "change vs reference"));
    return s.finish(true);
}

int cmd_sweep(const RunConfig& cfg, std::ostream& log) {
    const bool tau = cfg.experiment == Experiment::SweepTau;
    const auto& grid = tau ? cfg.sweep.tau_grid : cfg.sweep.alpha_grid;
    if (grid.empty()) throw Error(ErrorKind::UsageError, std::string(tau ? "sweep.tau_grid" : "sweep.alpha_grid") + " is empty");
    Session s(cfg);
    const LoadedData data = load_data(cfg);
    const auto rows = lm::sweep(tau ? lm::SweepParam::Tau : lm::SweepParam::Alpha, grid, cfg.loss, data.train,
                                data.eval, data.reference, cfg.optimizer, cfg.epochs, cfg.threads);
    const char* pname = tau ? "tau" : "alpha";
    CsvWriter table({"param", "value", "delta_chosen", "delta_rejected", "gated_fraction", "mean_gate",
                     "final_gated_fraction", "final_mean_gate"});
    std::vector<std::string> dyn_header = {"value"};
    dyn_header.insert(dyn_header.end(), kRecordHeader.begin(), kRecordHeader.end());
    CsvWriter dyn(dyn_header);
    std::vector<double> xs, dc, dr, gf;
    for (const auto& r : rows) {
        table.row({pname, cell(r.value), cell(r.delta_chosen), cell(r.delta_rejected), cell(r.gated_fraction),
                   cell(r.mean_gate), cell(r.final_gated_fraction), cell(r.final_mean_gate)});
        for (const auto& rec : r.records) {
            auto cells = record_cells(rec);
            cells.insert(cells.begin(), cell(r.value));
            dyn.row(cells);
        }
        xs.push_back(r.value);
        dc.push_back(r.delta_chosen);
        dr.push_back(r.delta_rejected);
        gf.push_back(r.gated_fraction);
        log << pname << " = " << format_double(r.value) << ": d_chosen " << format_double(r.delta_chosen)
            << ", d_rejected " << format_double(r.delta_rejected) << ", gated_fraction "
            << format_double(r.gated_fraction) << "\n";
    }
    s.dir.write("sweep.csv", table.str());
    s.dir.write("sweep_dynamics.csv", dyn.str());
    s.dir.write("sweep.svg", svg_line_chart(std::string("Sensitivity to ") + pname, xs,
                                            {{"delta log pi chosen", "#2ca02c", dc},
                                             {"delta log pi rejected", "#d62728", dr},
                                             {"gated fraction", "#7f7f7f", gf}},
                                            pname, "final value"));
    return s.finish(true);
}

namespace {

struct MethodRow {
    std::string method;
    massdyn::MassDynReport report;
    massdyn::Health health = massdyn::Health::Neutral;
};

std::string text_table(const std::vector<MethodRow>& rows) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-24s %12s %12s %12s  %s\n", "Method", "Margin d", "Chosen d",
                  "Others d", "Observation");
    os << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-24s %12.4f %12.4f %12.4f  %s\n", r.method.c_str(),
                      r.report.delta_margin, r.report.delta_chosen, r.report.delta_others,
                      massdyn::observation(r.health).c_str());
        os << line;
    }
    return os.str();
}

} // namespace

int cmd_massdyn(const RunConfig& cfg, std::ostream& log) {
    Session s(cfg);
    const massdyn::AggregateOptions agg{cfg.massdyn.canonical_only};
    const massdyn::HealthThresholds thr{cfg.massdyn.destructive_others};

    std::vector<std::pair<std::string, lm::TabularLM>> policies;
    lm::TabularLM reference;
    std::vector<massdyn::VariantInput> variants;
    bool check_ordering = false;

    if (!cfg.massdyn.policies.empty()) {
        if (cfg.massdyn.variants_path.empty())
            throw Error(ErrorKind::InvalidInput, "massdyn.variants is required with explicit policies");
        reference = lm::load_checkpoint(cfg.massdyn.reference_checkpoint).model;
        for (const auto& p : cfg.massdyn.policies)
            policies.emplace_back(p.name, lm::load_checkpoint(p.checkpoint).model);
        variants = massdyn::load_variants(cfg.massdyn.variants_path);
    } else {
        const LoadedData data = load_data(cfg);
        reference = data.reference;
        variants = cfg.massdyn.variants_path.empty()
                       ? massdyn::make_variant_set(data.eval, data.train, reference.vocab, cfg.seed)
                       : massdyn::load_variants(cfg.massdyn.variants_path);
        struct Spec {
            Objective o;
            bool gated;
            GateStatistic stat;
        };
        const Spec specs[] = {{Objective::DPO, false, GateStatistic::SeqMean},
                              {Objective::DPO, true, GateStatistic::SeqMean},
                              {Objective::DPO, true, GateStatistic::TokenQuantile},
                              {Objective::CalDPO, false, GateStatistic::SeqMean},
                              {Objective::CalDPO, true, GateStatistic::SeqMean}};
        for (const auto& sp : specs) {
            LossConfig lc = LossConfig::defaults_for(sp.o, sp.gated, sp.stat);
            lc.caldpo_beta_in_sigmoid = cfg.loss.caldpo_beta_in_sigmoid;
            log << "training " << lc.label() << "\n";
            auto run = lm::train(data.train, data.eval, reference, lc, cfg.optimizer, cfg.epochs, cfg.threads);
            s.dir.write("policy_" + slug(lc.label()) + ".ckpt", lm::checkpoint_to_string(run.policy, json({{"method", lc.label()}}).dump()));
            policies.emplace_back(lc.label(), std::move(run.policy));
        }
        s.dir.write("variants.jsonl", massdyn::variants_to_jsonl(variants));
        s.dir.write("reference.ckpt", lm::checkpoint_to_string(reference, json({{"role", "reference"}}).dump()));
        check_ordering = true;
    }

    std::vector<MethodRow> rows;
    CsvWriter per_variant({"method", "variant", "category", "count", "mean_delta"});
    for (const auto& [name, policy] : policies) {
        const auto records = massdyn::score_variants(policy, reference, variants, cfg.threads);
        MethodRow row{name, massdyn::aggregate(records, agg), massdyn::Health::Neutral};
        row.health = massdyn::healthiness_summary(row.report, thr);
        for (const auto& [label, mean] : row.report.per_variant)
            per_variant.row({cell(name), cell(massdyn::to_string(label)),
                             cell(massdyn::to_string(massdyn::category_of(label))),
                             cell(static_cast<long long>(mean.count)), cell(mean.mean_delta)});
        rows.push_back(std::move(row));
    }

    CsvWriter table({"method", "margin_delta", "delta_chosen", "delta_others", "observation", "health"});
    json machine = json::array();
    for (const auto& r : rows) {
        table.row({cell(r.method), cell(r.report.delta_margin), cell(r.report.delta_chosen),
                   cell(r.report.delta_others), cell(massdyn::observation(r.health)),
                   cell(massdyn::to_string(r.health))});
        machine.push_back({{"method", r.method},
                           {"margin_delta", format_double(r.report.delta_margin)},
                           {"delta_chosen", format_double(r.report.delta_chosen)},
                           {"delta_others", format_double(r.report.delta_others)},
                           {"observation", massdyn::observation(r.health)}});
    }

    bool ok = true;
    json checks = json::array();
    if (check_ordering) {
        auto find = [&](const std::string& label) -> const MethodRow& {
            for (const auto& r : rows)
                if (r.method == label) return r;
            throw Error(ErrorKind::InvalidInput, "missing run " + label);
        };
        const std::pair<const char*, const char*> pairs[] = {{"Gate-DPO (seq)", "DPO"},
                                                             {"Gate-Cal-DPO (seq)", "Cal-DPO"}};
        for (const auto& [gated, plain] : pairs) {
            const auto& g = find(gated);
            const auto& u = find(plain);
            const bool chosen_ok = g.report.delta_chosen > u.report.delta_chosen;
            const bool others_ok = g.report.delta_others > u.report.delta_others;
            ok = ok && chosen_ok && others_ok;
            checks.push_back({{"gated", gated}, {"ungated", plain}, {"delta_chosen_higher", chosen_ok},
                              {"delta_others_higher", others_ok}});
            log << gated << " vs " << plain << ": chosen " << (chosen_ok ? "PASS" : "FAIL") << ", others "
                << (others_ok ? "PASS" : "FAIL") << "\n";
        }
    }

    const std::string txt = text_table(rows);
    log << txt;
    s.dir.write("massdyn.txt", txt);
    s.dir.write("massdyn.csv", table.str());
    s.dir.write("massdyn_per_variant.csv", per_variant.str());
    s.dir.write("massdyn.json", json({{"rows", machine}, {"checks", checks}}).dump(2) + "\n");
    return s.finish(ok);
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
    Session s(cfg);
    const auto& gc = cfg.gradcheck;
    const GateMode mode = gc.non_detached ? GateMode::Recomputed : GateMode::Detached;
    CsvWriter table({"level", "objective", "gated", "cases", "max_rel_err", "threshold", "status"});
    bool ok = true;
    json single = json::array();

    for (Objective o : {Objective::DPO, Objective::IPO, Objective::CalDPO}) {
        for (bool gated : {false, true}) {
            const auto r = scalar_suite(o, gated, gc.pairs, cfg.seed, gc.h, mode);
            const bool pass = r.max_rel_err <= gc.scalar_threshold;
            ok = ok && pass;
            table.row({"scalar", cell(to_string(o)), gated ? "true" : "false", cell(r.cases),
                       cell(r.max_rel_err), cell(gc.scalar_threshold), pass ? "PASS" : "FAIL"});
            log << "scalar " << to_string(o) << (gated ? " gated" : " ungated") << ": max rel err "
                << format_double(r.max_rel_err) << (pass ? " PASS" : " FAIL") << "\n";
            if (gc.single_pair) {
                const auto c = random_scalar_case(o, gated, cfg.seed, 0);
                const auto g = analytic_vs_numeric_grads(c.adv, c.cfg, c.rejected, gc.h, mode);
                log << "  pair 0: z " << format_double(g.logit) << ", g " << format_double(g.gate_value) << ", c "
                    << format_double(g.grad_coeff) << ", dL/dchosen " << format_double(g.analytic_chosen)
                    << " (fd " << format_double(g.numeric_chosen) << "), dL/drejected "
                    << format_double(g.analytic_rejected) << " (fd " << format_double(g.numeric_rejected) << ")\n";
                single.push_back({{"objective", std::string(to_string(o))},
                                  {"gated", gated},
                                  {"delta_chosen", format_double(c.adv.delta_chosen)},
                                  {"delta_rejected", format_double(c.adv.delta_rejected)},
                                  {"z", format_double(g.logit)},
                                  {"g", format_double(g.gate_value)},
                                  {"c", format_double(g.grad_coeff)},
                                  {"analytic_chosen", format_double(g.analytic_chosen)},
                                  {"numeric_chosen", format_double(g.numeric_chosen)},
                                  {"analytic_rejected", format_double(g.analytic_rejected)},
                                  {"numeric_rejected", format_double(g.numeric_rejected)}});
            }
        }
    }

    // Parameter level always uses detached gates.
    for (Objective o : {Objective::DPO, Objective::IPO, Objective::CalDPO}) {
        for (bool gated : {false, true}) {
            double worst = 0.0;
            for (int b = 0; b < gc.param_batches; ++b) {
                const auto prob = random_param_problem(cfg.seed + static_cast<std::uint64_t>(b));
                const LossConfig lc = LossConfig::defaults_for(o, gated);
                worst = std::max(worst, param_gradcheck(prob.policy, prob.reference, prob.batch, lc, gc.h).max_rel_err);
            }
            const bool pass = worst <= gc.param_threshold;
            ok = ok && pass;
            table.row({"param", cell(to_string(o)), gated ? "true" : "false", cell(gc.param_batches), cell(worst),
                       cell(gc.param_threshold), pass ? "PASS" : "FAIL"});
            log << "param " << to_string(o) << (gated ? " gated" : " ungated") << ": max rel err "
                << format_double(worst) << (pass ? " PASS" : " FAIL") << "\n";
        }
    }

    s.dir.write("gradcheck.csv", table.str());
    if (gc.single_pair) s.dir.write("single_pair.json", single.dump(2) + "\n");
    log << (ok ? "gradcheck PASS\n" : "gradcheck FAIL\n");
    return s.finish(ok);
}

int run_command(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        switch (cfg.experiment) {
        case Experiment::Toy: return cmd_toy(cfg, log);
        case Experiment::StrictVsLoose: return cmd_strict_vs_loose(cfg, log);
        case Experiment::Train: return cmd_train(cfg, log);
        case Experiment::SweepTau:
        case Experiment::SweepAlpha: return cmd_sweep(cfg, log);
        case Experiment::MassDyn: return cmd_massdyn(cfg, log);
        case Experiment::GradCheck: return cmd_gradcheck(cfg, log);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case ErrorKind::UsageError: return kExitUsage;
        case ErrorKind::Divergence: return kExitDiverged;
        default: return kExitError;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}

} // namespace gatelab
