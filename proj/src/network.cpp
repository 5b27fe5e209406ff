#include "locnet/network.hpp"

#include <algorithm>
#include <sstream>

namespace locnet {

namespace {

uint64_t digest(const Eigen::VectorXd& v, int kind) {
    // FNV-1a over the raw payload bytes plus the message kind
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const unsigned char* p, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    mix(reinterpret_cast<const unsigned char*>(&kind), sizeof(kind));
    mix(reinterpret_cast<const unsigned char*>(v.data()), sizeof(double) * v.size());
    return h;
}

}  // namespace

RoundNetwork::RoundNetwork(const RangingGraph& graph, bool record_transcript)
    : graph_(graph), record_(record_transcript) {
    pending_.resize(graph.node_count());
    inboxes_.resize(graph.node_count());
}

void RoundNetwork::send(int from, int to, int kind, const Eigen::VectorXd& payload) {
    if (from < 0 || from >= graph_.node_count() || to < 0 || to >= graph_.node_count())
        throw std::invalid_argument("message endpoint out of range");
    const auto& nb = graph_.neighborhoods[from];
    if (!std::binary_search(nb.begin(), nb.end(), to))
        throw std::invalid_argument("send target is not a graph neighbor of sender");
    pending_[to].push_back(Message{from, to, kind, payload});
    if (record_)
        transcript_.push_back(TranscriptEntry{round_, from, to, kind, digest(payload, kind)});
}

void RoundNetwork::broadcast(int from, int kind, const Eigen::VectorXd& payload) {
    for (int to : graph_.neighborhoods[from]) send(from, to, kind, payload);
}

void RoundNetwork::step() {
    ++round_;
    for (int i = 0; i < graph_.node_count(); ++i) {
        inboxes_[i] = std::move(pending_[i]);
        pending_[i].clear();
        std::stable_sort(inboxes_[i].begin(), inboxes_[i].end(),
                         [](const Message& a, const Message& b) { return a.from < b.from; });
    }
}

std::string RoundNetwork::transcript_text() const {
    std::ostringstream os;
    for (const auto& t : transcript_)
        os << t.round << ' ' << t.from << ' ' << t.to << ' ' << t.kind << ' ' << std::hex
           << t.payload_digest << std::dec << '\n';
    return os.str();
}

bool RoundNetwork::locality_audit() const {
    for (const auto& t : transcript_) {
        const auto& nb = graph_.neighborhoods[t.from];
        if (!std::binary_search(nb.begin(), nb.end(), t.to)) return false;
    }
    return true;
}

std::vector<int> RoundProtocol::participants(const RangingGraph& graph) const {
    std::vector<int> all(graph.node_count());
    for (int i = 0; i < graph.node_count(); ++i) all[i] = i;
    return all;
}

ProtocolResult run_protocol(RoundNetwork& net, RoundProtocol& protocol, int max_rounds,
                            double tol) {
    const std::vector<int> nodes = protocol.participants(net.graph());
    protocol.init(net);

    ProtocolResult res;
    res.residuals.resize(static_cast<Eigen::Index>(nodes.size()));
    for (int r = 0; r < max_rounds; ++r) {
        net.step();
        for (int node : nodes) protocol.on_round(net, node);
        res.rounds = r + 1;
        bool all_ok = true;
        for (size_t k = 0; k < nodes.size(); ++k) {
            res.residuals(static_cast<Eigen::Index>(k)) = protocol.local_residual(nodes[k]);
            all_ok = all_ok && res.residuals(static_cast<Eigen::Index>(k)) < tol;
        }
        if (all_ok) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace locnet
