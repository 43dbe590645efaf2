// Python bindings over the core operations. Arrays cross the boundary as
// copies; the core owns no Python state.

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include <cstring>
#include <map>

#include "maskcon/bank.hpp"
#include "maskcon/checkpoint.hpp"
#include "maskcon/config.hpp"
#include "maskcon/data.hpp"
#include "maskcon/eval.hpp"
#include "maskcon/losses.hpp"
#include "maskcon/numerics.hpp"
#include "maskcon/relations.hpp"
#include "maskcon/trainer.hpp"

namespace py = pybind11;
using namespace maskcon;

namespace {

using DoubleArray =
    py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)),
           static_cast<std::size_t>(a.shape(1)));
  std::memcpy(m.data.data(), a.data(), m.size() * sizeof(double));
  return m;
}

py::array_t<double> from_matrix(const Matrix& m) {
  py::array_t<double> a({static_cast<py::ssize_t>(m.rows),
                         static_cast<py::ssize_t>(m.cols)});
  std::memcpy(a.mutable_data(), m.data.data(), m.size() * sizeof(double));
  return a;
}

Temperature tau_from(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) {
    return Temperature::parse(obj.cast<std::string>());
  }
  const double v = obj.cast<double>();
  if (v == 0.0) return Temperature::zero();
  if (std::isinf(v) && v > 0.0) return Temperature::infinity();
  return Temperature::finite(v);
}

BankSnapshot snapshot_from(const DoubleArray& proj,
                           std::vector<int> labels,
                           std::vector<std::int64_t> ids) {
  BankSnapshot snap;
  snap.projections = to_matrix(proj);
  if (labels.size() != snap.projections.rows) {
    throw std::invalid_argument("bank labels must align with rows");
  }
  if (ids.empty()) ids.assign(snap.projections.rows, -1);
  if (ids.size() != snap.projections.rows) {
    throw std::invalid_argument("bank ids must align with rows");
  }
  snap.labels = std::move(labels);
  snap.ids = std::move(ids);
  return snap;
}

py::dict dataset_dict(const Dataset& ds) {
  py::dict d;
  d["vectors"] = from_matrix(ds.vectors);
  d["coarse_labels"] = py::cast(ds.coarse_labels);
  d["fine_labels"] = py::cast(ds.fine_labels);
  d["m_coarse"] = ds.meta.m_coarse;
  d["m_fine"] = ds.meta.m_fine;
  d["source"] = ds.meta.source;
  return d;
}

py::dict result_dict(const TrainResult& res) {
  py::dict out;
  out["checkpoint"] = res.checkpoint_path;
  out["metrics"] = res.metrics_path;
  out["final_objective"] = res.final_objective;
  py::dict recall;
  for (std::size_t i = 0; i < res.final_recall.ks.size(); ++i) {
    recall[py::int_(res.final_recall.ks[i])] = res.final_recall.scores[i];
  }
  out["recall"] = recall;
  out["dz_sup"] = res.final_dz.dz_sup;
  out["dz_mask"] = res.final_dz.dz_mask.empty() ? 0.0 : res.final_dz.dz_mask[0];
  return out;
}

}  // namespace

PYBIND11_MODULE(_maskcon, m) {
  m.doc() = "contrastive representation learning from coarse labels";

  m.def("cosine_similarity_matrix",
        [](const DoubleArray& a, const DoubleArray& b) {
          return from_matrix(cosine_similarity_matrix(to_matrix(a),
                                                      to_matrix(b)));
        },
        py::arg("a"), py::arg("b"));

  m.def("softmax_rows",
        [](const DoubleArray& a, double tau) {
          return from_matrix(softmax_rows(to_matrix(a), tau));
        },
        py::arg("m"), py::arg("tau") = 1.0);

  m.def("cosine_lr", &cosine_lr, py::arg("epoch"), py::arg("total"),
        py::arg("base_lr"));

  m.def("relations_self",
        [](std::size_t batch_size, std::size_t fill) {
          return from_matrix(relations_self(batch_size, fill).rows);
        },
        py::arg("batch_size"), py::arg("fill"));

  m.def("relations_sup",
        [](const std::vector<int>& batch_labels,
           const std::vector<int>& bank_labels) {
          return from_matrix(relations_sup(batch_labels, bank_labels).rows);
        },
        py::arg("batch_labels"), py::arg("bank_labels"));

  m.def("relations_mask",
        [](const DoubleArray& key_projections, const DoubleArray& bank_proj,
           const std::vector<int>& bank_labels,
           const std::vector<int>& batch_labels, const py::object& tau,
           std::vector<std::int64_t> bank_ids,
           std::vector<std::int64_t> batch_ids) {
          BankSnapshot snap = snapshot_from(bank_proj, bank_labels,
                                            std::move(bank_ids));
          return from_matrix(relations_mask(to_matrix(key_projections), snap,
                                            batch_labels, batch_ids,
                                            tau_from(tau))
                                 .rows);
        },
        py::arg("key_projections"), py::arg("bank_projections"),
        py::arg("bank_labels"), py::arg("batch_labels"), py::arg("tau"),
        py::arg("bank_ids") = std::vector<std::int64_t>{},
        py::arg("batch_ids") = std::vector<std::int64_t>{});

  m.def("dz",
        [](const DoubleArray& z, const DoubleArray& z_ref) {
          return dz_rows(to_matrix(z), to_matrix(z_ref));
        },
        py::arg("z"), py::arg("z_ref"));

  m.def("ce_loss",
        [](const DoubleArray& logits, const std::vector<int>& labels) {
          LossOutput out = ce_loss(to_matrix(logits), labels);
          return py::make_tuple(out.value, from_matrix(out.grad_logits));
        },
        py::arg("logits"), py::arg("labels"));

  m.def("con_loss",
        [](const DoubleArray& query, const DoubleArray& key,
           const DoubleArray& bank_proj, const std::vector<int>& bank_labels,
           const DoubleArray& z, double tau0) {
          BankSnapshot snap = snapshot_from(bank_proj, bank_labels, {});
          RelationRows rows;
          rows.rows = to_matrix(z);
          LossOutput out = con_loss(to_matrix(query), to_matrix(key), snap,
                                    rows, tau0);
          return py::make_tuple(out.value, from_matrix(out.grad_proj));
        },
        py::arg("query_proj"), py::arg("key_proj"),
        py::arg("bank_projections"), py::arg("bank_labels"), py::arg("z"),
        py::arg("tau0") = 0.1);

  py::class_<MemoryBank>(m, "MemoryBank")
      .def(py::init<std::size_t, std::size_t>(), py::arg("capacity"),
           py::arg("dim"))
      .def("push",
           [](MemoryBank& bank, const DoubleArray& proj,
              const std::vector<int>& labels,
              std::vector<std::int64_t> ids) {
             Matrix p = to_matrix(proj);
             if (ids.empty()) ids.assign(p.rows, -1);
             bank.push(p, labels, ids);
           },
           py::arg("projections"), py::arg("labels"),
           py::arg("ids") = std::vector<std::int64_t>{})
      .def("snapshot",
           [](const MemoryBank& bank) {
             BankSnapshot snap = bank.snapshot();
             return py::make_tuple(from_matrix(snap.projections),
                                   py::cast(snap.labels),
                                   py::cast(snap.ids));
           })
      .def_property_readonly("fill", &MemoryBank::fill)
      .def_property_readonly("capacity", &MemoryBank::capacity);

  m.def("recall_at_k",
        [](const DoubleArray& embeddings, const std::vector<int>& labels,
           const std::vector<std::size_t>& ks) {
          RecallReport report = recall_at_k(to_matrix(embeddings), labels, ks);
          py::dict out;
          for (std::size_t i = 0; i < report.ks.size(); ++i) {
            out[py::int_(report.ks[i])] = report.scores[i];
          }
          return out;
        },
        py::arg("embeddings"), py::arg("fine_labels"), py::arg("ks"));

  m.def("gen_hierarchical_gaussian",
        [](std::size_t m_coarse, std::size_t fine_per_coarse,
           std::size_t n_per_fine, std::size_t dim, double coarse_sep,
           double fine_sep, double noise, std::uint64_t seed,
           double train_fraction) {
          auto [train, test] = gen_hierarchical_gaussian(
              m_coarse, fine_per_coarse, n_per_fine, dim, coarse_sep,
              fine_sep, noise, seed, train_fraction);
          return py::make_tuple(dataset_dict(train), dataset_dict(test));
        },
        py::arg("m_coarse"), py::arg("fine_per_coarse"),
        py::arg("n_per_fine"), py::arg("dim"), py::arg("coarse_sep"),
        py::arg("fine_sep"), py::arg("noise"), py::arg("seed"),
        py::arg("train_fraction") = 0.8);

  m.def("load_vds",
        [](const std::string& path) { return dataset_dict(load_vds(path)); },
        py::arg("path"));

  m.def("train",
        [](const std::string& config_path,
           const std::map<std::string, std::string>& overrides) {
          RunConfig cfg = parse_config(config_path);
          for (const auto& [k, v] : overrides) apply_override(cfg, k, v);
          validate_config(cfg);
          TrainResult res;
          {
            py::gil_scoped_release release;
            res = train_run(cfg);
          }
          return result_dict(res);
        },
        py::arg("config_path"),
        py::arg("overrides") = std::map<std::string, std::string>{});

  m.def("eval_checkpoint",
        [](const std::string& checkpoint_path, const std::string& data_path,
           const std::vector<std::size_t>& ks, const std::string& space) {
          const ModelParams model = load_checkpoint(checkpoint_path);
          const Dataset test = load_vds(data_path, Split::Test);
          const Matrix emb =
              embed_dataset(model, test, parse_embedding_space(space));
          RecallReport report = recall_at_k(emb, test.fine_labels, ks);
          py::dict out;
          for (std::size_t i = 0; i < report.ks.size(); ++i) {
            out[py::int_(report.ks[i])] = report.scores[i];
          }
          return out;
        },
        py::arg("checkpoint"), py::arg("data"),
        py::arg("ks") = std::vector<std::size_t>{1, 2, 5, 10},
        py::arg("space") = "features");
}
