#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gmlp/checkpoint.hpp"
#include "gmlp/costing.hpp"
#include "gmlp/gradsuite.hpp"
#include "gmlp/training.hpp"

namespace py = pybind11;
using namespace gmlp;
using TensorD = Tensor<double>;

namespace {

TensorD tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return TensorD(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const TensorD& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

py::dict report_to_dict(const costing::CostReport& r) {
    py::dict d;
    py::list items;
    for (const auto& it : r.items) {
        py::dict row;
        row["component"] = it.component;
        row["params"] = it.params;
        row["macs"] = it.macs;
        row["flops"] = 2 * it.macs;
        items.append(row);
    }
    d["items"] = items;
    d["total_params"] = r.total_params;
    d["total_macs"] = r.total_macs;
    d["total_flops"] = r.total_flops;
    return d;
}

ModelConfig config_from_arg(const std::string& preset_or_json) {
    if (is_preset(preset_or_json)) return preset(preset_or_json);
    return config_from_json(preset_or_json);
}

// f64 model handle for scripting: forward, training on synthetic tasks,
// checkpoint round trips.
class PyModel {
public:
    PyModel(const std::string& preset_or_json, std::uint64_t seed, bool freeze_spatial)
        : cfg_(config_from_arg(preset_or_json)) {
        model::BuildOptions opts;
        opts.spatial_zero_init = freeze_spatial;
        opts.freeze_spatial = freeze_spatial;
        Rng rng(seed);
        model_ = std::make_unique<model::Model<double>>(
            model::Model<double>::build(cfg_, rng, opts));
    }

    std::string config_json() const { return config_to_json(cfg_); }
    std::uint64_t num_params() const { return model_->params().total_scalars(); }
    int mask_token_id() const { return model_->mask_token_id(); }

    py::array_t<double> token_logits(const std::vector<int>& tokens,
                                     std::optional<std::vector<std::size_t>> positions) {
        ad::Tape<double> tape;
        auto b = model_->bind(tape);
        Rng rng(0);
        auto hidden = model_->hidden_tokens(tape, b, tokens, nn::Mode::Eval, rng);
        std::vector<std::size_t> pos;
        if (positions) {
            pos = *positions;
        } else {
            pos.resize(tokens.size());
            for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
        }
        auto logits = model_->mlm_logits_at(tape, b, hidden, pos);
        return array_from_tensor(tape.value(logits));
    }

    py::dict train_task(const std::string& task_name, int steps, std::uint64_t seed,
                        double peak_lr, int batch_size) {
        train::SynthTask task = train::parse_task(task_name, cfg_.n, cfg_.vocab_size);
        train::TrainConfig tc;
        tc.total_steps = steps;
        tc.warmup_steps = std::min(100, steps);
        tc.peak_lr = peak_lr;
        tc.batch_size = batch_size;
        tc.seed = seed;
        const auto result = train::train(*model_, task, tc);
        py::dict d;
        d["final_eval_loss"] = result.final_eval_loss;
        d["final_train_loss"] = result.rows.back().train_loss;
        d["toeplitzness_mean"] = result.rows.back().toeplitzness_mean;
        d["wall_seconds"] = result.wall_seconds;
        return d;
    }

    double evaluate_task(const std::string& task_name, std::uint64_t seed) {
        train::SynthTask task = train::parse_task(task_name, cfg_.n, cfg_.vocab_size);
        train::TrainConfig tc;
        tc.seed = seed;
        return train::evaluate(*model_, task, tc);
    }

    void save(const std::string& path) { io::save_params(model_->params(), path); }
    void load(const std::string& path) { io::load_params(model_->params(), path); }

private:
    ModelConfig cfg_;
    std::unique_ptr<model::Model<double>> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "gMLP family models: tensor kernels, cost accounting, training";

    m.def("presets", &preset_names, "Named model presets");
    m.def("preset_json", [](const std::string& name) { return config_to_json(preset(name)); },
          py::arg("name"), "Config JSON for a named preset");
    m.def(
        "analyze",
        [](const std::string& config, int seq_len) {
            const ModelConfig cfg = config_from_arg(config);
            return report_to_dict(costing::analyze(cfg, seq_len > 0 ? seq_len : cfg.n));
        },
        py::arg("config"), py::arg("seq_len") = 0,
        "Per-component parameter / MAC / FLOP breakdown for a preset or config JSON");

    m.def(
        "toeplitz_materialize",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w) {
            const TensorD wt = tensor_from_array(w);
            require(wt.rank() == 1, "toeplitz_materialize: expected a 1-d parameter vector");
            return array_from_tensor(toeplitz_materialize(wt, (wt.extent(0) + 1) / 2));
        },
        py::arg("w"), "Materialize a [2n-1] parameter vector into the [n x n] Toeplitz matrix");
    m.def(
        "toeplitzness",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w) {
            return train::toeplitzness(tensor_from_array(w));
        },
        py::arg("w"), "Diagonal-constancy score in [0, 1]; 1 means exactly Toeplitz");

    m.def(
        "fit_power_law",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            const auto fit = train::fit_power_law(x, y);
            return py::make_tuple(fit.coefficient, fit.exponent, fit.residual);
        },
        py::arg("x"), py::arg("y"),
        "Least squares in log-log space; returns (a, alpha, rms_residual) for y ~ a x^-alpha");

    m.def(
        "gelu",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
            return array_from_tensor(gelu(tensor_from_array(x)));
        },
        py::arg("x"), "Exact Gaussian-CDF GeLU");
    m.def(
        "softmax_rows",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
            return array_from_tensor(softmax_rows(tensor_from_array(x)));
        },
        py::arg("x"));
    m.def(
        "layer_norm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& gamma,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& beta) {
            return array_from_tensor(layer_norm(tensor_from_array(x), tensor_from_array(gamma),
                                                tensor_from_array(beta)));
        },
        py::arg("x"), py::arg("gamma"), py::arg("beta"));
    m.def(
        "matmul",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            return array_from_tensor(matmul(tensor_from_array(a), tensor_from_array(b)));
        },
        py::arg("a"), py::arg("b"), "Deterministic-summation matrix product");

    m.def(
        "gradcheck_ops",
        [](int seeds) {
            check::SuiteOptions opts;
            opts.seeds = seeds;
            const auto report = check::check_ops(opts);
            return py::make_tuple(report.all_pass(), report.worst());
        },
        py::arg("seeds") = 3,
        "Finite-difference check of every layer primitive; returns (all_pass, worst_rel_err)");

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&, std::uint64_t, bool>(), py::arg("config"),
             py::arg("seed") = 0, py::arg("freeze_spatial") = false)
        .def_property_readonly("config_json", &PyModel::config_json)
        .def_property_readonly("num_params", &PyModel::num_params)
        .def_property_readonly("mask_token_id", &PyModel::mask_token_id)
        .def("token_logits", &PyModel::token_logits, py::arg("tokens"),
             py::arg("positions") = std::nullopt,
             "Logits over the data vocabulary at the given positions (default: all)")
        .def("train_task", &PyModel::train_task, py::arg("task"), py::arg("steps") = 500,
             py::arg("seed") = 0, py::arg("peak_lr") = 3e-3, py::arg("batch_size") = 16)
        .def("evaluate_task", &PyModel::evaluate_task, py::arg("task"), py::arg("seed") = 0)
        .def("save", &PyModel::save, py::arg("path"))
        .def("load", &PyModel::load, py::arg("path"));
}
