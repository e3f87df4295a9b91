#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dptab/accountant.hpp"
#include "dptab/cli.hpp"
#include "dptab/metrics.hpp"
#include "dptab/serializer.hpp"
#include "dptab/tabular.hpp"
#include "dptab/tokenizer.hpp"

namespace py = pybind11;
using namespace dptab;

namespace {

tabular::Row row_from_dict(const tabular::TableSchema& schema,
                           const std::map<std::string, std::string>& values) {
  tabular::Row row(schema.columns.size());
  for (size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& spec = schema.columns[c];
    auto it = values.find(spec.name);
    require(it != values.end(), "domain", "missing value for column '" + spec.name + "'");
    if (spec.is_numeric()) {
      auto v = tabular::parse_numeric(it->second);
      require(v.has_value(), "domain", "non-numeric value for column '" + spec.name + "'");
      row[c] = tabular::quantize(*v, spec.render_precision);
    } else {
      row[c] = it->second;
    }
  }
  return row;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "dptab: differentially private synthetic tabular data (C++ core)";

  py::register_exception<Error>(m, "DptabError");

  m.def(
      "run_cli", [](const std::vector<std::string>& args) { return cli::run(args); },
      py::arg("args"), "Run a CLI subcommand; returns the exit code.");

  // Accountant
  m.def("rdp_sgm", &privacy::rdp_sgm, py::arg("q"), py::arg("sigma"), py::arg("alpha"),
        "Per-step RDP of the sampled Gaussian mechanism at order alpha.");
  m.def(
      "epsilon",
      [](double q, double sigma, long steps, double delta) {
        auto r = privacy::epsilon(q, sigma, steps, delta);
        return py::make_tuple(r.epsilon, r.best_alpha);
      },
      py::arg("q"), py::arg("sigma"), py::arg("steps"), py::arg("delta"),
      "(epsilon, best_alpha) after `steps` compositions.");
  m.def(
      "calibrate_sigma",
      [](double q, long steps, double delta, double target_epsilon) {
        return privacy::calibrate_sigma(q, steps, delta, target_epsilon);
      },
      py::arg("q"), py::arg("steps"), py::arg("delta"), py::arg("target_epsilon"));

  // Tokenizer
  py::class_<bpe::TokenizerModel>(m, "Tokenizer")
      .def_static(
          "train",
          [](const std::vector<std::string>& corpus, int vocab_size) {
            return bpe::train_bpe(corpus, vocab_size);
          },
          py::arg("corpus"), py::arg("vocab_size"))
      .def_property_readonly("vocab_size", &bpe::TokenizerModel::vocab_size)
      .def(
          "encode",
          [](const bpe::TokenizerModel& tok, const std::string& text) {
            auto stream = bpe::encode(tok, text);
            return py::make_tuple(stream.ids, stream.offsets);
          },
          py::arg("text"), "(ids, byte offsets)")
      .def(
          "decode",
          [](const bpe::TokenizerModel& tok, const std::vector<int>& ids) {
            return py::bytes(bpe::decode(tok, ids));
          },
          py::arg("ids"))
      .def("to_json", &bpe::TokenizerModel::to_json)
      .def_static("from_json", &bpe::TokenizerModel::from_json, py::arg("text"));

  // Serialization
  m.def(
      "serialize_record",
      [](const std::string& schema_json, const std::map<std::string, std::string>& values) {
        auto schema = tabular::schema_from_json(schema_json);
        auto order = serial::fixed_order(schema);
        return serial::serialize_record(row_from_dict(schema, values), schema, order).text;
      },
      py::arg("schema_json"), py::arg("values"),
      "Render one record as '<key> is <value>, ...' text (fixed target-first order).");
  m.def(
      "parse_generation",
      [](const std::string& schema_json, const std::string& text) {
        auto schema = tabular::schema_from_json(schema_json);
        auto parsed = serial::parse_generation(text, schema);
        py::dict fields, state;
        for (size_t c = 0; c < schema.columns.size(); ++c) {
          const auto& spec = schema.columns[c];
          const char* s = parsed.state[c] == serial::FieldState::Valid     ? "valid"
                          : parsed.state[c] == serial::FieldState::Invalid ? "invalid"
                                                                           : "missing";
          state[py::str(spec.name)] = s;
          if (parsed.state[c] == serial::FieldState::Valid)
            fields[py::str(spec.name)] = tabular::render_cell(parsed.cell[c], spec);
        }
        py::dict out;
        out["fields"] = fields;
        out["state"] = state;
        out["fully_valid"] = parsed.fully_valid();
        return out;
      },
      py::arg("schema_json"), py::arg("text"));

  // Table metrics over CSV files
  m.def(
      "evaluate_csv",
      [](const std::string& real_csv, const std::string& synth_csv,
         const std::string& target_column, const std::vector<int>& bins) {
        auto real = tabular::load_csv(real_csv, {}, target_column, /*dedup=*/true);
        std::map<std::string, tabular::ColumnKind> kinds;
        for (const auto& c : real.schema.columns) kinds[c.name] = c.kind;
        auto synth = tabular::load_csv(synth_csv, kinds, target_column, /*dedup=*/false);
        return metrics::evaluate(real, synth, bins, 0).to_json();
      },
      py::arg("real_csv"), py::arg("synth_csv"), py::arg("target_column") = "",
      py::arg("bins") = std::vector<int>{20, 50}, "Metrics report as a JSON string.");
}
