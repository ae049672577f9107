#pragma once

// Clustered, personalized federated training guided by mined client
// properties, and a FedAvg baseline over the same selection machinery.

#include "fedstl/config.hpp"
#include "fedstl/datagen.hpp"
#include "fedstl/models.hpp"
#include "fedstl/projection.hpp"

#include <memory>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace fedstl {

// A mined formula together with its compiled projection problem. Clients
// whose mining produced nothing carry `true`.
struct Property {
  Formula formula = Formula::truth();
  std::shared_ptr<const CompiledProperty> compiled;
  bool mined = false;

  static Property mine(const std::vector<Trace>& targets, const RunConfig& config);
};

struct ClientState {
  int id = 0;
  std::shared_ptr<const ClientDataset> data;
  Batch sample;           // the first sample_windows train windows
  Property property;      // mined on every train target
  Property sample_property;
  ModelState model;
};

struct ClusterState {
  int id = 0;
  // Shared part plus a cluster-side head used for cluster evaluation and
  // cluster epochs. The head never leaves the server.
  ModelState model;
  Property property;
  std::vector<int> members;  // selected clients of the last round, ascending
};

struct Assignment {
  std::vector<int> cluster_of;               // per client id; -1 when not assigned
  std::vector<std::vector<double>> losses;   // [selected index][cluster]; empty row when flagged
  std::vector<int> flagged;                  // client ids assigned by the fallback rule
};

struct RoundLog {
  std::size_t round = 0;
  std::vector<int> selected;
  std::vector<std::size_t> cluster_sizes;
  std::vector<double> cluster_ms;  // aggregation and cluster epochs, per cluster
  bool reclustered = false;
  double wall_ms = 0.0;
};

struct FederationState {
  RunConfig config;
  Arch arch;
  std::vector<std::string> schema;
  std::vector<ClientState> clients;
  std::vector<ClusterState> clusters;
  std::vector<int> identity;  // client id -> cluster id, -1 before first assignment
  std::size_t round = 0;
  bool seeded = false;
  std::optional<Assignment> last_assignment;
};

// Mines client properties and initializes every model from one seeded draw.
FederationState init_federation(const RunConfig& config, const Dataset& data);

// Assigns each selected client to the cluster whose model has the lowest
// mean property loss on the client's sample, ties to the lowest cluster id.
// Clients without a sample property keep `previous` (or cluster 0).
Assignment cluster_id(const std::vector<ClusterState>& clusters,
                      const std::vector<const ClientState*>& selected,
                      const std::vector<int>& previous);

// Sum n_i v_i / sum n_i. Throws ShapeError on length mismatch or no input.
std::vector<double> aggregate(
    const std::vector<std::pair<std::span<const double>, double>>& weighted);

// Uniform selection without replacement, ascending ids.
std::vector<int> select_clients(const RunConfig& config, std::size_t n_clients, std::size_t round);

RoundLog run_round(FederationState& state);

struct FedAvgState {
  RunConfig config;
  Arch arch;
  std::vector<std::shared_ptr<const ClientDataset>> clients;
  ModelState global;
  std::size_t round = 0;
};

FedAvgState init_fedavg(const RunConfig& config, const Dataset& data);
RoundLog run_fedavg_round(FedAvgState& state);

struct ClientMetrics {
  int id = 0;
  int cluster = -1;
  double mse = 0.0;
  double rho_pct = 0.0;
  double mse_teacher = 0.0;
  double rho_pct_teacher = 0.0;
  double mse_cluster = 0.0;
  double rho_pct_cluster = 0.0;
};

enum class Split { Train, Val, Test };

// The client's evaluation model is its cluster's shared part with its own
// head; the cluster columns use the cluster model. Teacher columns correct
// the client predictions with the client property.
std::vector<ClientMetrics> evaluate(const FederationState& state, Split split);
// Only mse and rho_pct are filled; properties come from `state`.
std::vector<ClientMetrics> evaluate(const FedAvgState& fedavg, const FederationState& state,
                                    Split split);

// Model the client would be evaluated with.
ModelState evaluation_model(const FederationState& state, int client);

// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace fedstl
