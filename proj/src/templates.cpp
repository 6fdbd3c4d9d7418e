#include "labelflow/templates.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "labelflow/errors.hpp"
#include "labelflow/registry.hpp"

namespace labelflow {

namespace {

// Canonical workflow files. Keep these byte-identical to serialize_workflow
// output; the template tests check the fixpoint.
constexpr std::array<std::pair<std::string_view, std::string_view>, 3> kTemplates = {{
    {"minimal-labeling", R"json({
  "version": "1.0",
  "nodes": [
    {
      "id": "check-all-labeled",
      "label": "check all labeled",
      "nodeType": "process",
      "function": "stoppageAnalysis",
      "implementation": "builtin.stoppage.allLabeled",
      "inputs": [
        "dataObjects",
        "labels"
      ],
      "outputs": [
        "stop"
      ],
      "blocking": true,
      "persistent": false,
      "config": {}
    },
    {
      "id": "exit",
      "label": "exit",
      "nodeType": "exit",
      "inputs": [],
      "outputs": [],
      "blocking": true
    },
    {
      "id": "grid-matrix",
      "label": "grid matrix",
      "nodeType": "process",
      "function": "interactiveLabeling",
      "implementation": "builtin.interface.gridMatrixClassification",
      "inputs": [
        "dataObjects",
        "labels",
        "samples",
        "categories"
      ],
      "outputs": [
        "labels"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "columns": 4,
        "rows": 4
      }
    },
    {
      "id": "initialization",
      "label": "initialization",
      "nodeType": "initialization",
      "inputs": [],
      "outputs": [
        "dataObjects",
        "labels",
        "categories"
      ],
      "blocking": true,
      "initOutputs": [
        "dataObjects",
        "labels",
        "categories"
      ]
    },
    {
      "id": "random-sampling",
      "label": "random sampling",
      "nodeType": "process",
      "function": "dataObjectSelection",
      "implementation": "builtin.selection.random",
      "inputs": [
        "dataObjects",
        "labels"
      ],
      "outputs": [
        "samples"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "batchSize": 16
      }
    },
    {
      "id": "stop",
      "label": "stop",
      "nodeType": "decision",
      "inputs": [
        "stop"
      ],
      "outputs": [],
      "blocking": true,
      "predicate": "stopIsTrue"
    }
  ],
  "edges": [
    {
      "source": "check-all-labeled",
      "target": "stop"
    },
    {
      "source": "grid-matrix",
      "target": "check-all-labeled"
    },
    {
      "source": "initialization",
      "target": "random-sampling"
    },
    {
      "source": "random-sampling",
      "target": "grid-matrix"
    },
    {
      "source": "stop",
      "target": "exit",
      "branch": true
    },
    {
      "source": "stop",
      "target": "random-sampling",
      "branch": false
    }
  ]
}
)json"},
    {"mixed-initiative-classification", R"json({
  "version": "1.0",
  "nodes": [
    {
      "id": "check-all-labeled",
      "label": "check all labeled",
      "nodeType": "process",
      "function": "stoppageAnalysis",
      "implementation": "builtin.stoppage.allLabeled",
      "inputs": [
        "dataObjects",
        "labels"
      ],
      "outputs": [
        "stop"
      ],
      "blocking": true,
      "persistent": false,
      "config": {}
    },
    {
      "id": "clustering",
      "label": "clustering",
      "nodeType": "process",
      "function": "dataObjectSelection",
      "implementation": "builtin.selection.cluster",
      "inputs": [
        "labels",
        "features"
      ],
      "outputs": [
        "samples"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "batchSize": 16,
        "k": 10
      }
    },
    {
      "id": "decision-tree-prelabel",
      "label": "decision tree prelabel",
      "nodeType": "process",
      "function": "defaultLabeling",
      "implementation": "builtin.defaultLabel.modelPrediction",
      "inputs": [
        "samples",
        "features",
        "model"
      ],
      "outputs": [
        "labels"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "modelKey": "default"
      }
    },
    {
      "id": "exit",
      "label": "exit",
      "nodeType": "exit",
      "inputs": [],
      "outputs": [],
      "blocking": true
    },
    {
      "id": "grid-matrix",
      "label": "grid matrix",
      "nodeType": "process",
      "function": "interactiveLabeling",
      "implementation": "builtin.interface.gridMatrixClassification",
      "inputs": [
        "dataObjects",
        "labels",
        "samples",
        "categories"
      ],
      "outputs": [
        "labels"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "columns": 4,
        "rows": 4
      }
    },
    {
      "id": "initialization",
      "label": "initialization",
      "nodeType": "initialization",
      "inputs": [],
      "outputs": [
        "dataObjects",
        "labels",
        "model",
        "categories"
      ],
      "blocking": true,
      "initOutputs": [
        "dataObjects",
        "labels",
        "model",
        "categories"
      ]
    },
    {
      "id": "model-training",
      "label": "model training",
      "nodeType": "process",
      "function": "modelTraining",
      "implementation": "builtin.train.tree",
      "inputs": [
        "labels",
        "features"
      ],
      "outputs": [
        "model"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "maxDepth": 0,
        "minLeaf": 1,
        "modelKey": "default"
      }
    },
    {
      "id": "stop",
      "label": "stop",
      "nodeType": "decision",
      "inputs": [
        "stop"
      ],
      "outputs": [],
      "blocking": true,
      "predicate": "stopIsTrue"
    },
    {
      "id": "svd-features",
      "label": "SVD features",
      "nodeType": "process",
      "function": "featureExtraction",
      "implementation": "builtin.features.svd",
      "inputs": [
        "dataObjects"
      ],
      "outputs": [
        "features"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "k": 16
      }
    }
  ],
  "edges": [
    {
      "source": "check-all-labeled",
      "target": "stop"
    },
    {
      "source": "clustering",
      "target": "decision-tree-prelabel"
    },
    {
      "source": "decision-tree-prelabel",
      "target": "grid-matrix"
    },
    {
      "source": "grid-matrix",
      "target": "check-all-labeled"
    },
    {
      "source": "initialization",
      "target": "svd-features"
    },
    {
      "source": "model-training",
      "target": "clustering"
    },
    {
      "source": "stop",
      "target": "exit",
      "branch": true
    },
    {
      "source": "stop",
      "target": "model-training",
      "branch": false
    },
    {
      "source": "svd-features",
      "target": "clustering"
    }
  ]
}
)json"},
    {"active-learning-classification", R"json({
  "version": "1.0",
  "nodes": [
    {
      "id": "active-learning",
      "label": "active learning",
      "nodeType": "process",
      "function": "dataObjectSelection",
      "implementation": "builtin.selection.entropy",
      "inputs": [
        "labels",
        "features",
        "model"
      ],
      "outputs": [
        "samples"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "batchSize": 16,
        "modelKey": "propagation"
      }
    },
    {
      "id": "check-labeled",
      "label": "check labeled rate",
      "nodeType": "process",
      "function": "stoppageAnalysis",
      "implementation": "builtin.stoppage.rate",
      "inputs": [
        "dataObjects",
        "labels"
      ],
      "outputs": [
        "stop"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "rate": 1.0
      }
    },
    {
      "id": "decision-tree-prelabel",
      "label": "decision tree prelabel",
      "nodeType": "process",
      "function": "defaultLabeling",
      "implementation": "builtin.defaultLabel.modelPrediction",
      "inputs": [
        "samples",
        "features",
        "model"
      ],
      "outputs": [
        "labels"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "modelKey": "default"
      }
    },
    {
      "id": "exit",
      "label": "exit",
      "nodeType": "exit",
      "inputs": [],
      "outputs": [],
      "blocking": true
    },
    {
      "id": "grid-matrix",
      "label": "grid matrix",
      "nodeType": "process",
      "function": "interactiveLabeling",
      "implementation": "builtin.interface.gridMatrixClassification",
      "inputs": [
        "dataObjects",
        "labels",
        "samples",
        "categories"
      ],
      "outputs": [
        "labels"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "columns": 4,
        "rows": 4
      }
    },
    {
      "id": "initialization",
      "label": "initialization",
      "nodeType": "initialization",
      "inputs": [],
      "outputs": [
        "dataObjects",
        "labels",
        "model",
        "categories"
      ],
      "blocking": true,
      "initOutputs": [
        "dataObjects",
        "labels",
        "model",
        "categories"
      ]
    },
    {
      "id": "propagation-training",
      "label": "label propagation training",
      "nodeType": "process",
      "function": "modelTraining",
      "implementation": "builtin.train.labelPropagation",
      "inputs": [
        "labels",
        "features"
      ],
      "outputs": [
        "model"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "alpha": 0.99,
        "kNeighbors": 10,
        "maxIter": 1000,
        "modelKey": "propagation",
        "tol": 1e-06
      }
    },
    {
      "id": "stop",
      "label": "stop",
      "nodeType": "decision",
      "inputs": [
        "stop"
      ],
      "outputs": [],
      "blocking": true,
      "predicate": "stopIsTrue"
    },
    {
      "id": "svd-features",
      "label": "SVD features",
      "nodeType": "process",
      "function": "featureExtraction",
      "implementation": "builtin.features.svd",
      "inputs": [
        "dataObjects"
      ],
      "outputs": [
        "features"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "k": 16
      }
    },
    {
      "id": "tree-training",
      "label": "decision tree training",
      "nodeType": "process",
      "function": "modelTraining",
      "implementation": "builtin.train.tree",
      "inputs": [
        "labels",
        "features"
      ],
      "outputs": [
        "model"
      ],
      "blocking": true,
      "persistent": false,
      "config": {
        "maxDepth": 0,
        "minLeaf": 1,
        "modelKey": "default"
      }
    }
  ],
  "edges": [
    {
      "source": "active-learning",
      "target": "tree-training"
    },
    {
      "source": "check-labeled",
      "target": "stop"
    },
    {
      "source": "decision-tree-prelabel",
      "target": "grid-matrix"
    },
    {
      "source": "grid-matrix",
      "target": "check-labeled"
    },
    {
      "source": "initialization",
      "target": "svd-features"
    },
    {
      "source": "propagation-training",
      "target": "active-learning"
    },
    {
      "source": "stop",
      "target": "exit",
      "branch": true
    },
    {
      "source": "stop",
      "target": "propagation-training",
      "branch": false
    },
    {
      "source": "svd-features",
      "target": "active-learning"
    },
    {
      "source": "tree-training",
      "target": "decision-tree-prelabel"
    }
  ]
}
)json"},
}};

}  // namespace

std::vector<std::string> template_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : kTemplates) out.emplace_back(name);
  return out;
}

std::string_view template_source(std::string_view name) {
  for (const auto& [id, src] : kTemplates)
    if (id == name) return src;
  throw UnknownTemplate("unknown template '" + std::string(name) + "'");
}

WorkflowGraph instantiate_template(std::string_view name, const std::map<std::string, nlohmann::json>& overrides) {
  WorkflowGraph g = parse_workflow(template_source(name));
  for (const auto& [key, value] : overrides) {
    std::string node_id, param = key;
    if (auto dot = key.find('.'); dot != std::string::npos) {
      node_id = key.substr(0, dot);
      param = key.substr(dot + 1);
    }
    bool applied = false;
    for (auto& n : g.nodes) {
      if (n.nodeType != NodeType::Process || (!node_id.empty() && n.id != node_id)) continue;
      const ImplementationDescriptor* impl = n.implementation ? find_implementation(*n.implementation) : nullptr;
      const bool known = n.config.contains(param) || (impl && impl->configSchema.contains(param));
      if (!known) continue;
      n.config[param] = value;
      if (impl) resolve_config(*impl, n.config);
      applied = true;
    }
    if (!applied) throw UnknownOverrideKey("override key '" + key + "' names no node config parameter");
  }
  return g;
}

}  // namespace labelflow
