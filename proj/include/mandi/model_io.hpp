#pragma once

// Text container for TrainedModel: whitespace-separated tokens, first line
// "mandimodel v<version>". Doubles are written in shortest round-trip form,
// so save(load(save(m))) is byte-identical to save(m).

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mandi/error.hpp"
#include "mandi/format.hpp"
#include "mandi/model.hpp"

namespace mandi {

inline constexpr int kModelFormatVersion = 1;

namespace io {

class Writer {
public:
    Writer& tok(std::string_view s) {
        if (!line_start_) out_ << ' ';
        out_ << s;
        line_start_ = false;
        return *this;
    }
    Writer& num(double v) { return tok(format_shortest(v)); }
    Writer& num(std::size_t v) { return tok(std::to_string(v)); }
    Writer& str(std::string_view s) {
        std::string e;
        if (s.empty()) e = "%";
        for (char c : s) {
            if (c == '%' || c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                char buf[4];
                std::snprintf(buf, sizeof buf, "%%%02X", static_cast<unsigned char>(c));
                e += buf;
            } else {
                e += c;
            }
        }
        return tok(e);
    }
    Writer& nl() {
        out_ << '\n';
        line_start_ = true;
        return *this;
    }
    std::string text() const { return out_.str(); }

private:
    std::ostringstream out_;
    bool line_start_ = true;
};

class Reader {
public:
    explicit Reader(std::string_view text) {
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            const std::size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            if (i > start) tokens_.push_back(text.substr(start, i - start));
        }
    }

    std::string_view tok() {
        if (pos_ >= tokens_.size()) fail(ErrorKind::DataError, "model file truncated");
        return tokens_[pos_++];
    }
    void expect(std::string_view want) {
        const auto got = tok();
        if (got != want)
            fail(ErrorKind::DataError, "model file corrupt: expected '" + std::string(want) + "', found '" +
                                           std::string(got) + "'");
    }
    double num() {
        const auto t = tok();
        const auto v = parse_double(t);
        if (!v) fail(ErrorKind::DataError, "model file corrupt: bad number '" + std::string(t) + "'");
        return *v;
    }
    std::size_t count() {
        const auto t = tok();
        const auto v = parse_int<std::size_t>(t);
        if (!v) fail(ErrorKind::DataError, "model file corrupt: bad count '" + std::string(t) + "'");
        if (*v > 1u << 30) fail(ErrorKind::DataError, "model file corrupt: implausible count");
        return *v;
    }
    std::uint64_t u64() {
        const auto t = tok();
        const auto v = parse_int<std::uint64_t>(t);
        if (!v) fail(ErrorKind::DataError, "model file corrupt: bad integer '" + std::string(t) + "'");
        return *v;
    }
    std::string str() {
        const auto t = tok();
        if (t == "%") return {};
        std::string s;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] == '%' && i + 2 < t.size()) {
                s += static_cast<char>(std::stoi(std::string(t.substr(i + 1, 2)), nullptr, 16));
                i += 2;
            } else {
                s += t[i];
            }
        }
        return s;
    }
    bool done() const { return pos_ == tokens_.size(); }

private:
    std::vector<std::string_view> tokens_;
    std::size_t pos_ = 0;
};

inline void write_vec(Writer& w, const std::vector<double>& v) {
    w.num(v.size());
    for (double x : v) w.num(x);
}
inline std::vector<double> read_vec(Reader& r) {
    std::vector<double> v(r.count());
    for (auto& x : v) x = r.num();
    return v;
}

inline void write_tree(Writer& w, const ml::Tree& t) {
    w.tok("tree").num(t.nodes.size()).nl();
    for (const auto& n : t.nodes) {
        if (n.is_leaf()) w.tok("L").num(n.value[0]).num(n.value[1]).num(n.value[2]).nl();
        else
            w.tok("N")
                .num(static_cast<std::size_t>(n.feature))
                .num(n.threshold)
                .num(static_cast<std::size_t>(n.left))
                .num(static_cast<std::size_t>(n.right))
                .nl();
    }
}

inline ml::Tree read_tree(Reader& r) {
    r.expect("tree");
    ml::Tree t;
    t.nodes.resize(r.count());
    if (t.nodes.empty()) fail(ErrorKind::DataError, "model file corrupt: empty tree");
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        auto& n = t.nodes[i];
        const auto kind = r.tok();
        if (kind == "L") {
            n.value = {r.num(), r.num(), r.num()};
        } else if (kind == "N") {
            n.feature = static_cast<std::int32_t>(r.count());
            n.threshold = r.num();
            const auto l = r.count(), rr = r.count();
            if (l <= i || rr <= i || l >= t.nodes.size() || rr >= t.nodes.size())
                fail(ErrorKind::DataError, "model file corrupt: bad child index");
            n.left = static_cast<std::int32_t>(l);
            n.right = static_cast<std::int32_t>(rr);
        } else {
            fail(ErrorKind::DataError, "model file corrupt: bad node kind");
        }
    }
    return t;
}

inline void write_standardizer(Writer& w, const ml::Standardizer& s) {
    write_vec(w, s.mean);
    w.nl();
    write_vec(w, s.scale);
    w.nl();
}
inline ml::Standardizer read_standardizer(Reader& r) {
    ml::Standardizer s;
    s.mean = read_vec(r);
    s.scale = read_vec(r);
    if (s.mean.size() != s.scale.size()) fail(ErrorKind::DataError, "model file corrupt: standardizer");
    return s;
}

inline void write_classifier(Writer& w, const Classifier& c) {
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ConstantClassifier>) {
                w.tok("const").num(index_of(m.label)).nl();
            } else if constexpr (std::is_same_v<T, ml::LogRegModel>) {
                w.tok("logreg").nl();
                write_standardizer(w, m.standardizer);
                write_vec(w, m.theta);
                w.nl();
            } else if constexpr (std::is_same_v<T, ml::LinearSvmModel>) {
                w.tok("svm").nl();
                write_standardizer(w, m.standardizer);
                write_vec(w, m.w);
                w.num(m.bias[0]).num(m.bias[1]).num(m.bias[2]).nl();
            } else if constexpr (std::is_same_v<T, ml::ForestModel>) {
                w.tok("forest").num(m.trees.size());
                if (m.oob_accuracy) w.tok("oob").num(*m.oob_accuracy);
                else w.tok("nooob");
                w.nl();
                for (const auto& t : m.trees) write_tree(w, t);
            } else if constexpr (std::is_same_v<T, ml::AdaBoostModel>) {
                w.tok("adaboost").num(std::size_t{m.fallback}).num(m.trees.size()).nl();
                for (std::size_t i = 0; i < m.trees.size(); ++i) {
                    w.tok("weight").num(m.tree_weights[i]).num(m.learner_errors[i]).nl();
                    write_tree(w, m.trees[i]);
                }
            } else if constexpr (std::is_same_v<T, ml::GradBoostModel>) {
                w.tok("gradboost").num(m.learning_rate).num(m.initial[0]).num(m.initial[1]).num(m.initial[2]);
                w.num(m.trees.size()).nl();
                for (const auto& t : m.trees) write_tree(w, t);
            }
        },
        c);
}

inline Classifier read_classifier(Reader& r) {
    const auto kind = r.tok();
    if (kind == "const") {
        const auto l = r.count();
        if (l >= kNumClasses) fail(ErrorKind::DataError, "model file corrupt: bad label");
        return ConstantClassifier{direction_from_index(l)};
    }
    if (kind == "logreg") {
        ml::LogRegModel m;
        m.standardizer = read_standardizer(r);
        m.theta = read_vec(r);
        if (m.theta.size() != kNumClasses * (m.standardizer.mean.size() + 1))
            fail(ErrorKind::DataError, "model file corrupt: logreg size");
        return m;
    }
    if (kind == "svm") {
        ml::LinearSvmModel m;
        m.standardizer = read_standardizer(r);
        m.w = read_vec(r);
        m.bias = {r.num(), r.num(), r.num()};
        if (m.w.size() != kNumClasses * m.standardizer.mean.size())
            fail(ErrorKind::DataError, "model file corrupt: svm size");
        return m;
    }
    if (kind == "forest") {
        ml::ForestModel m;
        const auto n = r.count();
        const auto oob = r.tok();
        if (oob == "oob") m.oob_accuracy = r.num();
        else if (oob != "nooob") fail(ErrorKind::DataError, "model file corrupt: forest");
        for (std::size_t i = 0; i < n; ++i) m.trees.push_back(read_tree(r));
        return m;
    }
    if (kind == "adaboost") {
        ml::AdaBoostModel m;
        m.fallback = static_cast<std::uint8_t>(r.count());
        const auto n = r.count();
        for (std::size_t i = 0; i < n; ++i) {
            r.expect("weight");
            m.tree_weights.push_back(r.num());
            m.learner_errors.push_back(r.num());
            m.trees.push_back(read_tree(r));
        }
        return m;
    }
    if (kind == "gradboost") {
        ml::GradBoostModel m;
        m.learning_rate = r.num();
        m.initial = {r.num(), r.num(), r.num()};
        const auto n = r.count();
        for (std::size_t i = 0; i < n; ++i) m.trees.push_back(read_tree(r));
        return m;
    }
    fail(ErrorKind::DataError, "model file corrupt: unknown classifier '" + std::string(kind) + "'");
}

}  // namespace io

inline std::string serialize_model(const TrainedModel& model) {
    io::Writer w;
    w.tok("mandimodel").tok("v" + std::to_string(kModelFormatVersion)).nl();
    w.tok("spec").tok(to_string(model.spec.family)).tok(std::to_string(model.spec.seed)).num(model.spec.hyperparams.size());
    for (const auto& [k, v] : model.spec.hyperparams) w.str(k).num(v);
    w.nl();
    w.tok("layout").str(model.layout).nl();
    w.tok("window").num(model.window.b).num(model.window.f).num(model.window.epsilon);
    w.tok(model.window.doy == DoyEncoding::Raw ? "raw" : "cyclic").nl();
    w.tok("alpha").num(model.alpha).nl();
    w.tok("markets").num(model.market_ids.size());
    for (const auto& id : model.market_ids) w.str(id);
    w.nl();
    w.tok("outputs").num(model.outputs.size()).nl();
    for (const auto& out : model.outputs) {
        w.tok("output").num(std::size_t{static_cast<std::uint8_t>(out.degeneracy)});
        w.num(out.counts[0]).num(out.counts[1]).num(out.counts[2]).num(out.train_rows.size());
        for (auto r : out.train_rows) w.num(std::size_t{r});
        w.nl();
        io::write_classifier(w, out.classifier);
    }
    if (model.evidence) {
        const auto& ev = *model.evidence;
        w.tok("evidence").num(ev.features.rows).num(ev.features.cols).nl();
        for (std::size_t i = 0; i < ev.features.rows; ++i) {
            w.tok(format_date(ev.anchors[i]));
            for (double v : ev.features.row(i)) w.num(v);
            const std::size_t n = model.outputs.size();
            for (std::size_t o = 0; o < n; ++o)
                w.num(ev.masks[i * n + o] ? index_of(ev.labels[i * n + o]) : std::size_t{9});
            w.nl();
        }
    } else {
        w.tok("noevidence").nl();
    }
    w.tok("end").nl();
    return w.text();
}

inline TrainedModel parse_model(std::string_view text) {
    io::Reader r(text);
    if (r.tok() != "mandimodel") fail(ErrorKind::DataError, "not a model file");
    {
        const auto v = r.tok();
        const auto version = v.size() > 1 && v[0] == 'v' ? parse_int<int>(v.substr(1)) : std::nullopt;
        if (!version) fail(ErrorKind::DataError, "model file corrupt: bad version token");
        if (*version != kModelFormatVersion)
            fail(ErrorKind::VersionMismatch, "model format version " + std::to_string(*version) +
                                                 " does not match supported version " +
                                                 std::to_string(kModelFormatVersion));
    }
    TrainedModel m;
    r.expect("spec");
    {
        const auto fam = parse_family(r.tok());
        if (!fam) fail(ErrorKind::DataError, "model file corrupt: unknown family");
        m.spec.family = *fam;
        m.spec.seed = r.u64();
        const auto n = r.count();
        for (std::size_t i = 0; i < n; ++i) {
            auto key = r.str();
            m.spec.hyperparams[key] = r.num();
        }
    }
    r.expect("layout");
    m.layout = r.str();
    r.expect("window");
    m.window.b = r.count();
    m.window.f = r.count();
    m.window.epsilon = r.num();
    {
        const auto d = r.tok();
        if (d == "raw") m.window.doy = DoyEncoding::Raw;
        else if (d == "cyclic") m.window.doy = DoyEncoding::Cyclic;
        else fail(ErrorKind::DataError, "model file corrupt: doy encoding");
    }
    r.expect("alpha");
    m.alpha = r.num();
    r.expect("markets");
    m.market_ids.resize(r.count());
    for (auto& id : m.market_ids) id = r.str();
    r.expect("outputs");
    m.outputs.resize(r.count());
    if (m.outputs.size() != m.market_ids.size() * m.window.f)
        fail(ErrorKind::DataError, "model file corrupt: output count");
    for (auto& out : m.outputs) {
        r.expect("output");
        const auto deg = r.count();
        if (deg > 2) fail(ErrorKind::DataError, "model file corrupt: degeneracy flag");
        out.degeneracy = static_cast<Degeneracy>(deg);
        out.counts = {r.count(), r.count(), r.count()};
        out.train_rows.resize(r.count());
        for (auto& row : out.train_rows) row = static_cast<std::uint32_t>(r.count());
        out.classifier = io::read_classifier(r);
    }
    const auto ev_tok = r.tok();
    if (ev_tok == "evidence") {
        EvidenceIndex ev;
        const auto rows = r.count();
        const auto cols = r.count();
        ev.features = ml::Matrix(rows, cols);
        const std::size_t n = m.outputs.size();
        ev.labels.assign(rows * n, Direction::Stay);
        ev.masks.assign(rows * n, 0);
        for (std::size_t i = 0; i < rows; ++i) {
            const auto d = parse_date(r.tok());
            if (!d) fail(ErrorKind::DataError, "model file corrupt: evidence date");
            ev.anchors.push_back(*d);
            for (auto& v : ev.features.row(i)) v = r.num();
            for (std::size_t o = 0; o < n; ++o) {
                const auto code = r.count();
                if (code == 9) continue;
                if (code >= kNumClasses) fail(ErrorKind::DataError, "model file corrupt: evidence label");
                ev.labels[i * n + o] = direction_from_index(code);
                ev.masks[i * n + o] = 1;
            }
        }
        for (const auto& out : m.outputs)
            for (auto row : out.train_rows)
                if (row >= rows) fail(ErrorKind::DataError, "model file corrupt: evidence row");
        m.evidence = std::move(ev);
    } else if (ev_tok != "noevidence") {
        fail(ErrorKind::DataError, "model file corrupt: evidence section");
    }
    r.expect("end");
    if (!r.done()) fail(ErrorKind::DataError, "model file corrupt: trailing data");
    return m;
}

inline void save_model(const TrainedModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write model '" + path + "'");
    out << serialize_model(model);
    if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

inline TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingInput, "cannot open model '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

}  // namespace mandi
