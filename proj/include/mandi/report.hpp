#pragma once

// Plain "key: value" text reports written by the CLI.

#include <span>
#include <string>
#include <vector>

#include "mandi/evaluation.hpp"
#include "mandi/format.hpp"
#include "mandi/model.hpp"

namespace mandi {

class ReportWriter {
public:
    ReportWriter& kv(const std::string& key, const std::string& value) {
        text_ += key + ": " + value + '\n';
        return *this;
    }
    ReportWriter& kv(const std::string& key, double value) { return kv(key, format_fixed(value, 6)); }
    ReportWriter& kv(const std::string& key, std::size_t value) { return kv(key, std::to_string(value)); }
    ReportWriter& line(const std::string& s) {
        text_ += s + '\n';
        return *this;
    }
    const std::string& text() const { return text_; }

private:
    std::string text_;
};

inline std::string doy_name(DoyEncoding d) { return d == DoyEncoding::Raw ? "raw" : "cyclic"; }

inline void write_metrics(ReportWriter& w, const std::string& prefix, const Metrics& m) {
    w.kv(prefix + "raw_accuracy", m.raw_accuracy);
    w.kv(prefix + "balanced_accuracy", m.balanced_accuracy);
    std::string absent;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const std::string name = to_string(direction_from_index(c));
        if (m.recall[c]) {
            w.kv(prefix + "recall_" + name, *m.recall[c]);
        } else {
            w.kv(prefix + "recall_" + name, std::string("absent"));
            absent += (absent.empty() ? "" : ",") + name;
        }
    }
    w.kv(prefix + "absent_classes", absent.empty() ? std::string("none") : absent);
}

inline void write_confusion(ReportWriter& w, const ConfusionMatrix& cm) {
    w.line("confusion (rows truth, columns predicted; order up down stay):");
    for (std::size_t t = 0; t < kNumClasses; ++t)
        w.line("  " + std::string(to_string(direction_from_index(t))) + ": " + std::to_string(cm.counts[t][0]) + ' ' +
               std::to_string(cm.counts[t][1]) + ' ' + std::to_string(cm.counts[t][2]));
}

inline void write_split(ReportWriter& w, const std::optional<SplitSpec>& s) {
    if (!s) return;
    w.kv("train_end", format_date(s->train_end));
    w.kv("val_end", format_date(s->val_end));
    w.kv("test_end", format_date(s->test_end));
}

inline std::string format_eval_report(const EvalReport& r, const std::string& part, const ModelSpec& spec,
                                      const WindowConfig& window, std::size_t examples) {
    ReportWriter w;
    w.kv("report", std::string("evaluation"));
    w.kv("family", r.family);
    w.kv("spec", spec.canonical());
    w.kv("spec_digest", r.spec_digest);
    w.kv("seed", std::to_string(r.seed));
    w.kv("alpha", r.alpha);
    w.kv("b", r.b);
    w.kv("f", r.f);
    w.kv("epsilon", format_shortest(window.epsilon));
    w.kv("doy", doy_name(window.doy));
    w.kv("split", part);
    write_split(w, r.split);
    w.kv("examples", examples);
    w.kv("targets", static_cast<std::size_t>(r.confusion.total()));
    write_metrics(w, "", r.metrics);
    write_confusion(w, r.confusion);
    return w.text();
}

inline std::string format_sweep_report(std::span<const SweepPoint> points, const std::optional<SplitSpec>& split,
                                       bool refit_with_validation) {
    ReportWriter w;
    w.kv("report", std::string("sweep"));
    write_split(w, split);
    w.kv("refit_with_validation", std::string(refit_with_validation ? "true" : "false"));
    w.kv("points", points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        w.line("");
        w.kv("point", i);
        w.kv("alpha", p.alpha);
        w.kv("family", p.family);
        w.kv("b", p.b);
        w.kv("spec", p.spec.canonical());
        w.kv("spec_digest", p.spec_digest);
        write_metrics(w, "val_", p.validation);
        write_metrics(w, "test_", p.test);
        write_confusion(w, p.test_report.confusion);
    }
    return w.text();
}

}  // namespace mandi
