#include "gelenet/experiment.hpp"

#include "gelenet/optim.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace gelenet {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    return os;
}

void write_report_files(const fs::path& dir, const std::string& stem, const metrics::MetricReport& r)
{
    {
        auto os = open_out(dir / (stem + ".txt"));
        metrics::write_text_report(os, r);
    }
    {
        auto os = open_out(dir / (stem + ".json"));
        os << metrics::to_json(r) << '\n';
    }
    {
        auto os = open_out(dir / (stem + "_curves.csv"));
        metrics::write_curves_csv(os, r);
    }
}

std::string fmt(double v, int digits = 4)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::vector<fs::path> collect_pngs(const fs::path& p)
{
    std::vector<fs::path> out;
    if (fs::is_directory(p)) {
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_regular_file() && e.path().extension() == ".png")
                out.push_back(e.path());
        std::sort(out.begin(), out.end());
    } else if (fs::exists(p)) {
        out.push_back(p);
    } else {
        throw DataError("no such file or directory '" + p.string() + "'");
    }
    return out;
}

Image load_mask(const fs::path& p)
{
    Image m = to_gray(read_png(p));
    for (double& v : m.values)
        v = v >= 0.5 ? 1.0 : 0.0;
    return m;
}

} // namespace

std::vector<Sample> load_dataset(const ExperimentConfig& cfg)
{
    if (cfg.data_source == DataSource::manifest)
        return load_manifest(cfg.manifest, cfg.input_size());
    SynthConfig s = cfg.synth;
    s.size = cfg.input_size();
    return synthesize(s);
}

std::vector<LossRecord> train_model(GeleNet& model, const std::vector<Sample>& data, const ExperimentConfig& cfg,
                                    const TrainOptions& options)
{
    if (data.empty())
        throw DataError("training set is empty");
    Rng rng(cfg.seed ^ 0x5deece66dULL);
    std::vector<std::size_t> order(data.size());
    std::vector<LossRecord> trace;
    std::size_t iteration = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = step_decay_lr(cfg.lr, cfg.lr_decay_factor, cfg.lr_decay_period, static_cast<int>(epoch));

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            if (cfg.max_iterations != 0 && iteration >= cfg.max_iterations)
                return trace;
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Batch batch;
            if (cfg.augment) {
                std::vector<Sample> augmented;
                std::uniform_int_distribution<int> pick(0, 7);
                for (std::size_t i = start; i < stop; ++i)
                    augmented.push_back(augment(data[order[i]], kAllAugmentations[pick(rng)]));
                std::vector<std::size_t> idx(augmented.size());
                std::iota(idx.begin(), idx.end(), std::size_t{0});
                batch = make_batch(augmented, idx);
            } else {
                batch = make_batch(data, std::vector<std::size_t>(order.begin() + start, order.begin() + stop));
            }

            LossRecord rec;
            {
                Tape tape;
                Tape::Scope scope(tape);
                const Tensor saliency = model.forward(batch.images).saliency;
                LossTerms terms;
                const Tensor loss = hybrid_loss(saliency, batch.masks, &terms);
                rec = LossRecord{iteration, epoch, lr, loss.item(), terms.iou, terms.bce};
                if (!std::isfinite(rec.loss))
                    throw NumericalError("non-finite loss at iteration " + std::to_string(iteration));
                backward(loss);
            }
            adam_step(model.parameters(), AdamOptions{lr});
            for (const auto& p : model.parameters())
                for (double v : p->value.data())
                    if (!std::isfinite(v))
                        throw NumericalError("non-finite value in '" + p->name + "' after iteration " +
                                             std::to_string(iteration));
            trace.push_back(rec);
            if (options.on_iteration)
                options.on_iteration(rec);
            ++iteration;
        }
    }
    return trace;
}

std::vector<Image> predict_maps(const GeleNet& model, const std::vector<Sample>& data, std::size_t batch_size)
{
    std::vector<Image> out;
    for (std::size_t start = 0; start < data.size(); start += std::max<std::size_t>(batch_size, 1)) {
        const std::size_t stop = std::min(data.size(), start + std::max<std::size_t>(batch_size, 1));
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor pred = model.predict(make_batch(data, idx).images);
        for (std::size_t i = 0; i < idx.size(); ++i)
            out.push_back(image_from_tensor(pred, i));
    }
    return out;
}

std::size_t evaluation_threads()
{
    if (const char* env = std::getenv("GELENET_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1)
            return static_cast<std::size_t>(v);
        throw ConfigError("GELENET_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

metrics::MetricReport evaluate_maps(const std::vector<Image>& predictions, const std::vector<Image>& truths,
                                    std::size_t threads, std::vector<metrics::MetricReport>* per_image)
{
    if (predictions.size() != truths.size())
        throw std::invalid_argument("evaluate_maps: " + std::to_string(predictions.size()) + " predictions for " +
                                    std::to_string(truths.size()) + " ground truths");
    std::vector<metrics::MetricReport> reports(predictions.size());
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(predictions.size(), 1));
    // Each image lands in its own slot, so aggregation order never depends on scheduling.
    auto work = [&](std::size_t w) {
        for (std::size_t i = w; i < predictions.size(); i += workers)
            reports[i] = metrics::evaluate(predictions[i], truths[i]);
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work, w);
    }
    if (per_image != nullptr)
        *per_image = reports;
    return metrics::aggregate(reports);
}

void write_loss_csv(const fs::path& path, const std::vector<LossRecord>& trace)
{
    auto os = open_out(path);
    os << "iteration,epoch,lr,loss,iou,bce\n";
    char buf[160];
    for (const LossRecord& r : trace) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.epoch, r.lr, r.loss, r.iou,
                      r.bce);
        os << buf;
    }
}

TrainSummary run_train(const ExperimentConfig& cfg, std::ostream& log)
{
    cfg.validate();
    const auto data = load_dataset(cfg);
    GeleNet model(cfg.model, cfg.seed);
    log << "training " << model.parameters().scalar_count() << " parameters on " << data.size() << " images of "
        << cfg.input_size() << "x" << cfg.input_size() << '\n';

    fs::create_directories(cfg.out_dir);
    {
        auto os = open_out(cfg.out_dir / "config.txt");
        os << dump_config(cfg);
    }
    if (cfg.data_source == DataSource::synthetic)
        write_sidecar(cfg.out_dir / "objects.tsv", data);

    const auto start = std::chrono::steady_clock::now();
    TrainOptions opts;
    opts.on_iteration = [&](const LossRecord& r) {
        if (r.iteration % 25 == 0)
            log << "iter " << r.iteration << " epoch " << r.epoch << " lr " << r.lr << " loss " << fmt(r.loss)
                << " (iou " << fmt(r.iou) << ", bce " << fmt(r.bce) << ")\n";
    };
    TrainSummary s;
    s.trace = train_model(model, data, cfg, opts);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    s.checkpoint = cfg.out_dir / "checkpoint.bin";
    save_checkpoint(model.parameters(), s.checkpoint);
    write_loss_csv(cfg.out_dir / "loss.csv", s.trace);

    std::vector<Image> truths;
    for (const Sample& smp : data)
        truths.push_back(smp.mask);
    std::vector<metrics::MetricReport> per_image;
    s.train_report = evaluate_maps(predict_maps(model, data, cfg.batch_size), truths, 1, &per_image);
    write_report_files(cfg.out_dir, "train_report", s.train_report);

    log << "finished " << s.trace.size() << " iterations in " << fmt(seconds, 1) << " s";
    if (!s.trace.empty())
        log << "; loss " << fmt(s.trace.front().loss) << " -> " << fmt(s.trace.back().loss);
    log << "\ntraining set: s_measure " << fmt(s.train_report.s_measure) << ", f_adp " << fmt(s.train_report.f_adp)
        << ", e_adp " << fmt(s.train_report.e_adp) << ", mae " << fmt(s.train_report.mae) << '\n';
    return s;
}

namespace {

// Attention maps as written (values already in (0,1)); C rescaled by its maximum so the
// row-stochastic entries are visible.
void write_debug_maps(const fs::path& dir, const std::string& stem, const ForwardResult& r)
{
    auto traces = {std::pair{"low", &r.low_trace}, std::pair{"high", &r.high_trace}};
    for (const auto& [tag, trace] : traces) {
        if (!*trace)
            continue;
        const auto& t = **trace;
        for (std::size_t i = 0; i < t.attention_maps.size(); ++i)
            write_png(dir / (stem + "_" + tag + "_a" + std::to_string(i + 1) + ".png"),
                      image_from_tensor(t.attention_maps[i], 0));
        if (t.a_ori.defined())
            write_png(dir / (stem + "_" + tag + "_a_ori.png"), image_from_tensor(t.a_ori, 0));
    }
    if (r.ktm_trace) {
        Image c = image_from_tensor(r.ktm_trace->correlation, 0);
        const double peak = *std::max_element(c.values.begin(), c.values.end());
        if (peak > 0.0)
            for (double& v : c.values)
                v /= peak;
        write_png(dir / (stem + "_ktm_C.png"), c);
    }
}

} // namespace

std::vector<fs::path> run_infer(const ExperimentConfig& cfg, const fs::path& checkpoint,
                                const std::vector<fs::path>& inputs, const fs::path& out_dir, std::ostream& log,
                                bool debug_maps)
{
    cfg.validate();
    GeleNet model(cfg.model, cfg.seed);
    load_checkpoint(model.parameters(), checkpoint);

    std::vector<fs::path> files;
    for (const fs::path& p : inputs)
        for (const fs::path& f : collect_pngs(p))
            files.push_back(f);
    if (files.empty())
        throw DataError("no input images given");

    fs::create_directories(out_dir);
    const std::size_t n = cfg.input_size();
    std::vector<fs::path> written;
    for (const fs::path& f : files) {
        const Image original = to_rgb(read_png(f));
        const Image resized = resize_bilinear(original, n, n);
        const ForwardResult r = model.forward(stack_images({&resized}));
        const Image map = resize_bilinear(image_from_tensor(r.saliency, 0), original.height, original.width);
        const fs::path target = out_dir / (f.stem().string() + ".png");
        write_png(target, map);
        if (debug_maps)
            write_debug_maps(out_dir, f.stem().string(), r);
        written.push_back(target);
        log << f.string() << " -> " << target.string() << '\n';
    }
    return written;
}

metrics::MetricReport run_eval(const fs::path& predictions, const fs::path& ground_truth, const fs::path& out_dir,
                               std::ostream& log)
{
    std::map<std::string, fs::path> preds, gts;
    for (const fs::path& p : collect_pngs(predictions))
        preds[p.stem().string()] = p;
    if (fs::is_directory(ground_truth)) {
        for (const fs::path& p : collect_pngs(ground_truth))
            gts[p.stem().string()] = p;
    } else {
        // Manifest: the mask path of each record, keyed by the image's stem.
        std::ifstream is(ground_truth);
        if (!is)
            throw DataError("cannot open '" + ground_truth.string() + "'");
        std::string line;
        while (std::getline(is, line)) {
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            const auto tab = line.find('\t');
            if (line.empty() || tab == std::string::npos)
                continue;
            fs::path image(line.substr(0, tab)), mask(line.substr(tab + 1));
            if (mask.is_relative())
                mask = ground_truth.parent_path() / mask;
            gts[image.stem().string()] = mask;
        }
    }

    std::vector<std::string> unmatched;
    for (const auto& [stem, _] : preds)
        if (!gts.count(stem))
            unmatched.push_back("prediction without ground truth: " + stem);
    for (const auto& [stem, _] : gts)
        if (!preds.count(stem))
            unmatched.push_back("ground truth without prediction: " + stem);
    if (!unmatched.empty()) {
        std::string msg = "unmatched files:";
        for (const auto& u : unmatched)
            msg += "\n  " + u;
        throw DataError(msg);
    }
    if (preds.empty())
        throw DataError("no prediction/ground-truth pairs found");

    std::vector<std::string> stems;
    std::vector<Image> pred_maps, truths;
    for (const auto& [stem, path] : preds) {
        Image g = load_mask(gts.at(stem));
        Image p = to_gray(read_png(path));
        if (p.height != g.height || p.width != g.width)
            p = resize_bilinear(p, g.height, g.width);
        stems.push_back(stem);
        pred_maps.push_back(std::move(p));
        truths.push_back(std::move(g));
    }

    std::vector<metrics::MetricReport> per_image;
    const metrics::MetricReport agg = evaluate_maps(pred_maps, truths, evaluation_threads(), &per_image);

    fs::create_directories(out_dir);
    {
        auto os = open_out(out_dir / "per_image.csv");
        os << "id,s_measure,f_max,f_mean,f_adp,e_max,e_mean,e_adp,mae\n";
        os.precision(10);
        for (std::size_t i = 0; i < stems.size(); ++i) {
            const auto& r = per_image[i];
            os << stems[i] << ',' << r.s_measure << ',' << r.f_max << ',' << r.f_mean << ',' << r.f_adp << ','
               << r.e_max << ',' << r.e_mean << ',' << r.e_adp << ',' << r.mae << '\n';
        }
    }
    write_report_files(out_dir, "report", agg);
    log << "evaluated " << stems.size() << " images\n";
    metrics::write_text_report(log, agg);
    return agg;
}

GradcheckSummary run_gradcheck(double tolerance, const std::string& corrupt_op, std::uint64_t seed, std::ostream& log)
{
    GradCheckOptions opts;
    opts.tolerance = tolerance;
    opts.seed = seed;
    struct FaultGuard {
        explicit FaultGuard(const std::string& op) { testing::set_backward_fault(op, op.empty() ? 1.0 : 1.5); }
        ~FaultGuard() { testing::set_backward_fault("", 1.0); }
    } guard(corrupt_op);

    GradcheckSummary s;
    log << std::left << std::setw(12) << "module" << std::setw(10) << "samples" << std::setw(14) << "max_rel_err"
        << std::setw(36) << "worst" << "result\n";
    for (const std::string& m : kCheckedModules) {
        ModuleCheck c = check_module(m, opts);
        s.passed = s.passed && c.result.passed;
        std::ostringstream err;
        err << std::scientific << std::setprecision(3) << c.result.max_rel_error;
        log << std::left << std::setw(12) << m << std::setw(10) << c.result.samples.size() << std::setw(14)
            << err.str() << std::setw(36) << c.result.worst_target << (c.result.passed ? "PASS" : "FAIL") << '\n';
        s.modules.push_back(std::move(c));
    }
    log << (s.passed ? "all modules passed" : "gradient check FAILED") << " at tolerance " << tolerance << '\n';
    return s;
}

std::vector<AblationRow> run_ablate(const ExperimentConfig& cfg, const std::vector<std::string>& variants,
                                    std::size_t seeds, std::ostream& log)
{
    cfg.validate();
    if (variants.empty())
        throw ConfigError("ablate: no variants given");
    if (seeds == 0)
        throw ConfigError("ablate: seed count must be positive");
    std::vector<Variant> resolved;
    for (const std::string& v : variants) {
        try {
            resolved.push_back(make_variant(v, cfg.model.backbone));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    const auto data = load_dataset(cfg);
    std::vector<Image> truths;
    for (const Sample& s : data)
        truths.push_back(s.mask);

    std::vector<AblationRow> rows;
    for (const Variant& v : resolved) {
        AblationRow row;
        row.variant = v;
        std::vector<metrics::MetricReport> per_seed;
        for (std::size_t k = 0; k < seeds; ++k) {
            ExperimentConfig run = cfg;
            run.model = v.config;
            run.seed = cfg.seed + k;
            GeleNet model(run.model, run.seed);
            const auto trace = train_model(model, data, run);
            per_seed.push_back(evaluate_maps(predict_maps(model, data, run.batch_size), truths, 1));
            row.f_adp_per_seed.push_back(per_seed.back().f_adp);
            log << v.name << " seed " << run.seed << ": loss " << (trace.empty() ? 0.0 : trace.back().loss)
                << ", f_adp " << fmt(per_seed.back().f_adp) << ", mae " << fmt(per_seed.back().mae) << '\n';
        }
        row.report = metrics::aggregate(per_seed);
        rows.push_back(std::move(row));
    }

    fs::create_directories(cfg.out_dir);
    {
        auto os = open_out(cfg.out_dir / "ablation.md");
        write_ablation_table(os, rows);
    }
    {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            nlohmann::ordered_json e = nlohmann::ordered_json::parse(metrics::to_json(r.report, -1));
            e.erase("precision");
            e.erase("recall");
            e.erase("f_curve");
            j.push_back({{"variant", r.variant.name}, {"row", r.variant.table_row},
                         {"f_adp_per_seed", r.f_adp_per_seed}, {"metrics", e}});
        }
        auto os = open_out(cfg.out_dir / "ablation.json");
        os << j.dump(2) << '\n';
    }
    return rows;
}

void write_ablation_table(std::ostream& os, const std::vector<AblationRow>& rows)
{
    auto mark = [](bool on) { return on ? "✓" : " "; };
    os << "| No. | Variant | D-SWSAM | KTM | SWSAM | S_alpha | F_max | F_mean | F_adp | E_max | E_mean | E_adp | MAE |\n"
       << "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& v = rows[i].variant;
        const auto& r = rows[i].report;
        const auto& c = v.config;
        os << "| " << (v.table_row ? std::to_string(v.table_row) : "-") << " | " << v.name << " | "
           << mark(c.low == Enhancer::dswsam || c.high == Enhancer::dswsam) << " | " << mark(c.ktm) << " | "
           << mark(c.low == Enhancer::swsam || c.high == Enhancer::swsam) << " | " << fmt(r.s_measure) << " | "
           << fmt(r.f_max) << " | " << fmt(r.f_mean) << " | " << fmt(r.f_adp) << " | " << fmt(r.e_max) << " | "
           << fmt(r.e_mean) << " | " << fmt(r.e_adp) << " | " << fmt(r.mae) << " |\n";
    }
}

} // namespace gelenet
