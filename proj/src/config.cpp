#include "locnet/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace locnet {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

Eigen::MatrixXd parse_matrix(const std::string& value, const std::string& where) {
    // rows separated by ';', entries by whitespace; stored column-per-row
    std::vector<std::vector<double>> rows;
    std::stringstream ss(value);
    std::string row;
    while (std::getline(ss, row, ';')) {
        row = trim(row);
        if (row.empty()) continue;
        std::stringstream rs(row);
        std::vector<double> entries;
        double x;
        while (rs >> x) entries.push_back(x);
        if (!rs.eof()) throw ConfigError(where + ": malformed number in matrix row");
        if (entries.empty()) throw ConfigError(where + ": empty matrix row");
        if (!rows.empty() && rows[0].size() != entries.size())
            throw ConfigError(where + ": ragged matrix rows");
        rows.push_back(entries);
    }
    if (rows.empty()) return {};
    Eigen::MatrixXd m(rows[0].size(), rows.size());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[0].size(); ++c) m(c, r) = rows[r][c];
    return m;
}

std::string format_matrix(const Eigen::MatrixXd& m) {
    std::ostringstream os;
    char buf[64];
    for (int c = 0; c < m.cols(); ++c) {
        if (c) os << " ; ";
        for (int r = 0; r < m.rows(); ++r) {
            if (r) os << ' ';
            std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
            os << buf;
        }
    }
    return os.str();
}

struct Field {
    std::function<void(const std::string&, const std::string&)> set;
    std::function<std::string()> get;
};

class Schema {
public:
    void number(const std::string& key, double* v, double lo, double hi) {
        fields_[key] = {
            [=](const std::string& raw, const std::string& where) {
                std::stringstream ss(raw);
                double x;
                if (!(ss >> x) || !(ss >> std::ws).eof())
                    throw ConfigError(where + ": expected a number, got '" + raw + "'");
                if (x < lo || x > hi)
                    throw ConfigError(where + ": value " + raw + " outside [" +
                                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
                *v = x;
            },
            [=]() {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.17g", *v);
                return std::string(buf);
            }};
    }

    void integer(const std::string& key, int* v, int lo, int hi) {
        fields_[key] = {
            [=](const std::string& raw, const std::string& where) {
                std::stringstream ss(raw);
                long long x;
                if (!(ss >> x) || !(ss >> std::ws).eof())
                    throw ConfigError(where + ": expected an integer, got '" + raw + "'");
                if (x < lo || x > hi)
                    throw ConfigError(where + ": value " + raw + " outside [" +
                                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
                *v = static_cast<int>(x);
            },
            [=]() { return std::to_string(*v); }};
    }

    void uinteger(const std::string& key, uint64_t* v) {
        fields_[key] = {
            [=](const std::string& raw, const std::string& where) {
                std::stringstream ss(raw);
                uint64_t x;
                if (!(ss >> x) || !(ss >> std::ws).eof())
                    throw ConfigError(where + ": expected an unsigned integer, got '" + raw +
                                      "'");
                *v = x;
            },
            [=]() { return std::to_string(*v); }};
    }

    void choice(const std::string& key, std::string* v, std::vector<std::string> allowed) {
        fields_[key] = {
            [=](const std::string& raw, const std::string& where) {
                for (const auto& a : allowed)
                    if (raw == a) {
                        *v = raw;
                        return;
                    }
                std::string opts;
                for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
                throw ConfigError(where + ": '" + raw + "' is not one of " + opts);
            },
            [=]() { return *v; }};
    }

    void boolean(const std::string& key, bool* v) {
        fields_[key] = {
            [=](const std::string& raw, const std::string& where) {
                if (raw == "true" || raw == "1") {
                    *v = true;
                } else if (raw == "false" || raw == "0") {
                    *v = false;
                } else {
                    throw ConfigError(where + ": expected true|false, got '" + raw + "'");
                }
            },
            [=]() { return std::string(*v ? "true" : "false"); }};
    }

    void text(const std::string& key, std::string* v) {
        fields_[key] = {[=](const std::string& raw, const std::string&) { *v = raw; },
                        [=]() { return *v; }};
    }

    void matrix(const std::string& key, Eigen::MatrixXd* v) {
        fields_[key] = {[=](const std::string& raw, const std::string& where) {
                            *v = parse_matrix(raw, where);
                        },
                        [=]() { return format_matrix(*v); }};
    }

    void vector2(const std::string& key, Eigen::Vector2d* v) {
        fields_[key] = {[=](const std::string& raw, const std::string& where) {
                            const Eigen::MatrixXd m = parse_matrix(raw, where);
                            if (m.rows() != 2 || m.cols() != 1)
                                throw ConfigError(where + ": expected two numbers");
                            *v = m.col(0);
                        },
                        [=]() { return format_matrix(*v); }};
    }

    const std::map<std::string, Field>& fields() const { return fields_; }

private:
    std::map<std::string, Field> fields_;
};

std::map<std::string, Schema> build_schema(ScenarioConfig& c) {
    std::map<std::string, Schema> s;
    s["scenario"].choice("which", &c.which, {"inspection", "ugv"});
    s["scenario"].choice("mode", &c.mode, {"D", "RP"});
    s["scenario"].integer("steps", &c.steps, 1, 100000);
    s["scenario"].uinteger("seed", &c.seed);

    s["network"].matrix("pairs", &c.ranging_pairs);

    s["noise"].choice("kind", &c.noise_kind, {"additive", "lognormal"});
    s["noise"].number("sigma", &c.sigma, 1e-12, 1e6);

    s["potential"].choice("kind", &c.potential_kind, {"aopt", "dopt", "eopt"});
    s["potential"].number("k_loc", &c.k_loc, 0.0, 1e6);
    s["potential"].number("k_con", &c.k_con, 0.0, 1e6);
    s["potential"].number("step_cap", &c.step_cap, 1e-9, 1e6);

    s["distributed"].number("eta", &c.dist_eta, 0.0, 1e6);
    s["distributed"].integer("max_rounds", &c.dist_max_rounds, 1, 100000000);
    s["distributed"].number("tol", &c.dist_tol, 0.0, 1.0);
    s["distributed"].integer("inner_rounds", &c.dist_inner_rounds, 1, 1000000);
    s["distributed"].integer("outer_iters", &c.dist_outer_iters, 1, 1000000);

    s["constraints"].number("delta", &c.delta, 0.0, 1e6);
    s["constraints"].number("armijo_step", &c.armijo_step, 1e-12, 1e6);
    s["constraints"].number("armijo_contraction", &c.armijo_contraction, 1e-6, 0.999999);
    s["constraints"].number("armijo_decrease", &c.armijo_decrease, 0.0, 1.0);
    s["constraints"].integer("armijo_max_backtracks", &c.armijo_max_backtracks, 1, 1000);

    s["inspection"].number("length", &c.structure_length, 1e-6, 1e6);
    s["inspection"].number("height", &c.structure_height, 1e-6, 1e6);
    s["inspection"].number("spacing", &c.waypoint_spacing, 1e-9, 1e6);
    s["inspection"].matrix("tags", &c.insp_tags);
    s["inspection"].matrix("anchors", &c.insp_anchors);
    s["inspection"].matrix("boxes", &c.insp_boxes);
    s["inspection"].number("influence", &c.box_influence, 1e-9, 1e6);
    s["inspection"].number("k_p", &c.kp, 0.0, 1e6);
    s["inspection"].number("k_i", &c.ki, 0.0, 1e6);
    s["inspection"].number("alpha", &c.alpha, -1e6, 1e6);
    s["inspection"].number("beta", &c.beta, -1e6, 1e6);
    s["inspection"].number("dt", &c.dt, 1e-6, 10.0);
    s["inspection"].number("dt_max", &c.dt_max, 1e-6, 10.0);
    s["inspection"].number("plan_period", &c.plan_period, 1e-6, 1e4);
    s["inspection"].boolean("plan_on_estimates", &c.plan_on_estimates);

    s["ugv"].matrix("offsets", &c.ugv_offsets);
    s["ugv"].matrix("anchors", &c.ugv_anchors);
    s["ugv"].vector2("start", &c.ugv_start);
    s["ugv"].number("theta0", &c.ugv_theta0, -10.0, 10.0);
    s["ugv"].integer("max_steps", &c.ugv_max_steps, 1, 1000000);
    s["ugv"].number("sigma", &c.ugv_sigma, 1e-12, 1e6);
    s["ugv"].number("penalty_rho", &c.ugv_penalty_rho, 0.0, 1e9);
    s["ugv"].number("step_cap", &c.ugv_step_cap, 0.0, 1e6);

    s["montecarlo"].integer("trials", &c.mc_trials, 2, 10000000);
    s["montecarlo"].integer("period", &c.mc_period, 0, 1000000);
    s["montecarlo"].integer("inner_trials", &c.mc_inner_trials, 2, 10000000);

    s["output"].text("dir", &c.out_dir);
    return s;
}

}  // namespace

ScenarioConfig::ScenarioConfig() {
    const InspectionConfig insp;
    insp_tags = insp.tag_start;
    insp_anchors = insp.anchor_start;
    insp_boxes.resize(4, static_cast<Eigen::Index>(insp.boxes.size()));
    for (size_t b = 0; b < insp.boxes.size(); ++b)
        insp_boxes.col(static_cast<Eigen::Index>(b)) << insp.boxes[b].lo, insp.boxes[b].hi;
    const UgvConfig ugv;
    ugv_offsets = ugv.body_offsets;
    ugv_anchors = ugv.anchors;
}

NoiseModel ScenarioConfig::noise() const {
    NoiseModel n;
    n.kind = noise_kind == "additive" ? NoiseKind::Additive : NoiseKind::LogNormal;
    n.sigma = sigma;
    return n;
}

InspectionConfig ScenarioConfig::inspection() const {
    InspectionConfig insp;
    for (int p = 0; p < ranging_pairs.cols(); ++p)
        insp.ranging_pairs.emplace_back(static_cast<int>(ranging_pairs(0, p)),
                                        static_cast<int>(ranging_pairs(1, p)));
    insp.structure_length = structure_length;
    insp.structure_height = structure_height;
    insp.waypoint_spacing = waypoint_spacing;
    insp.steps = steps;
    insp.tag_start = insp_tags;
    insp.anchor_start = insp_anchors;
    insp.boxes.clear();
    for (int b = 0; b < insp_boxes.cols(); ++b)
        insp.boxes.push_back(BoundingBox{insp_boxes.col(b).head<2>(),
                                         insp_boxes.col(b).tail<2>(), box_influence});
    insp.noise = noise();
    insp.k_loc = k_loc;
    insp.k_con = k_con;
    insp.step_cap = step_cap;
    insp.alpha = alpha;
    insp.beta = beta;
    insp.kp = kp;
    insp.ki = ki;
    insp.dt = dt;
    insp.dt_max = dt_max;
    insp.plan_period = plan_period;
    insp.mc_period = mc_period;
    insp.mc_trials = mc_inner_trials;
    insp.seed = seed;
    insp.plan_on_estimates = plan_on_estimates;
    return insp;
}

UgvConfig ScenarioConfig::ugv() const {
    UgvConfig u;
    u.body_offsets = ugv_offsets;
    u.anchors = ugv_anchors;
    u.noise = NoiseModel{noise_kind == "additive" ? NoiseKind::Additive
                                                  : NoiseKind::LogNormal,
                         ugv_sigma};
    u.start_center = ugv_start;
    u.start_theta = ugv_theta0;
    u.max_steps = ugv_max_steps;
    u.delta = delta;
    u.penalty_rho = ugv_penalty_rho;
    u.primal_step_cap = ugv_step_cap;
    u.armijo.initial_step = armijo_step;
    u.armijo.contraction = armijo_contraction;
    u.armijo.sufficient_decrease = armijo_decrease;
    u.armijo.max_backtracks = armijo_max_backtracks;
    u.dt = dt;
    u.dt_max = dt_max;
    u.plan_period = plan_period;
    u.mc_trials = mc_trials;
    u.seed = seed;
    return u;
}

ScenarioConfig parse_config_text(const std::string& text) {
    ScenarioConfig config;
    auto schema = build_schema(config);

    std::stringstream ss(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section");
            section = trim(line.substr(1, line.size() - 2));
            if (schema.find(section) == schema.end())
                throw ConfigError("[" + section + "]: unknown section");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError(key + ": key outside any section");
        const auto& fields = schema.at(section).fields();
        const auto it = fields.find(key);
        if (it == fields.end())
            throw ConfigError(section + "." + key + ": unknown key");
        it->second.set(value, section + "." + key);
    }

    if (config.dt_max > config.dt)
        throw ConfigError("inspection.dt_max: must not exceed dt");
    return config;
}

ScenarioConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const ScenarioConfig& config) {
    ScenarioConfig copy = config;
    auto schema = build_schema(copy);
    std::ostringstream os;
    for (const auto& [section, fields] : schema) {
        os << '[' << section << "]\n";
        for (const auto& [key, field] : fields.fields())
            os << key << " = " << field.get() << '\n';
        os << '\n';
    }
    return os.str();
}

}  // namespace locnet
