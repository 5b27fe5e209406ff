#ifndef LOCNET_NETWORK_HPP
#define LOCNET_NETWORK_HPP

#include <functional>
#include <string>

#include "locnet/geometry.hpp"

namespace locnet {

struct Message {
    int from = -1;
    int to = -1;
    int kind = 0;  // protocol-defined message type
    Eigen::VectorXd payload;
};

struct TranscriptEntry {
    int round;
    int from;
    int to;
    int kind;
    uint64_t payload_digest;
};

/// Deterministic synchronous message fabric over a ranging graph. Messages
/// sent during round k are delivered at round k+1; inboxes are sorted by
/// sender. Sends are restricted to graph neighbors, which makes every
/// protocol one-hop local by construction.
class RoundNetwork {
public:
    explicit RoundNetwork(const RangingGraph& graph, bool record_transcript = true);

    const RangingGraph& graph() const { return graph_; }
    int round() const { return round_; }

    void send(int from, int to, int kind, const Eigen::VectorXd& payload);
    void broadcast(int from, int kind, const Eigen::VectorXd& payload);

    /// Messages delivered to `node` this round.
    const std::vector<Message>& inbox(int node) const { return inboxes_[node]; }

    /// Advance one round: deliver everything queued during the current round.
    void step();

    const std::vector<TranscriptEntry>& transcript() const { return transcript_; }
    std::string transcript_text() const;

    /// True when every recorded message travelled along a graph edge.
    bool locality_audit() const;

private:
    RangingGraph graph_;
    bool record_;
    int round_ = 0;
    std::vector<std::vector<Message>> pending_;
    std::vector<std::vector<Message>> inboxes_;
    std::vector<TranscriptEntry> transcript_;
};

/// A node-local protocol run by the synchronous engine. Handlers must depend
/// only on (local state, inbox) so that execution order within a round does
/// not matter.
class RoundProtocol {
public:
    virtual ~RoundProtocol() = default;

    /// Queue round-0 messages and set up local state.
    virtual void init(RoundNetwork& net) = 0;

    /// Called once per participating node per round, after delivery.
    virtual void on_round(RoundNetwork& net, int node) = 0;

    virtual double local_residual(int node) const = 0;

    /// Nodes driven by the engine; defaults to every node in the graph.
    virtual std::vector<int> participants(const RangingGraph& graph) const;
};

struct ProtocolResult {
    bool converged = false;
    int rounds = 0;
    Eigen::VectorXd residuals;  // last local residuals, indexed by participant order
};

ProtocolResult run_protocol(RoundNetwork& net, RoundProtocol& protocol, int max_rounds,
                            double tol);

}  // namespace locnet

#endif
