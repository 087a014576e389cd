#pragma once

#include "degkit/covreg.hpp"
#include "degkit/degindex.hpp"
#include "degkit/funcdata.hpp"
#include "degkit/mvdeg.hpp"
#include "degkit/sigclust.hpp"
#include "degkit/stdeg.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace degkit::json_io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "1";

/// Wraps a body as {"schema_version", "kind", <body fields>}.
Json document(const std::string& kind, Json body);
/// Parses a document and checks its schema version and kind.
Json read_document(const std::filesystem::path& path, const std::string& kind);
Json parse_document(const std::string& text, const std::string& kind, const std::string& source = "<string>");
/// Pretty-printed with a trailing newline.
std::string dump(const Json& j);

Json vec(const Eigen::VectorXd& v);
Json vec(const std::vector<double>& v);
Json mat(const Eigen::MatrixXd& m);  // array of rows
Eigen::VectorXd to_vector(const Json& j);
std::vector<double> to_std_vector(const Json& j);
Eigen::MatrixXd to_matrix(const Json& j);

Json to_json(const BSplineBasis& b);
BSplineBasis bspline_from_json(const Json& j);

Json to_json(const index::DegIndexModel& m);
index::DegIndexModel index_model_from_json(const Json& j);

Json to_json(const CopulaSpec& c);
CopulaSpec copula_from_json(const Json& j);
Json to_json(const Marginal& m);
Marginal marginal_from_json(const Json& j);
Json to_json(const mvdeg::CopulaWienerModel& m);
mvdeg::CopulaWienerModel mvdeg_model_from_json(const Json& j);

Json to_json(const fda::FpcaBasis& b);
fda::FpcaBasis fpca_from_json(const Json& j);

Json to_json(const cluster::PenalizedGmm& m);
cluster::PenalizedGmm gmm_from_json(const Json& j);

Json to_json(const covreg::EnLifetimeModel& m);
covreg::EnLifetimeModel en_model_from_json(const Json& j);
Json to_json(const covreg::FuncRegModel& m);
covreg::FuncRegModel funcreg_model_from_json(const Json& j);
Json to_json(const covreg::TensorRegModel& m);
covreg::TensorRegModel tensor_model_from_json(const Json& j);

Json to_json(const st::StGrid& g);
st::StGrid grid_from_json(const Json& j);
Json to_json(const st::StPosterior& p);
st::StPosterior posterior_from_json(const Json& j);

}  // namespace degkit::json_io
