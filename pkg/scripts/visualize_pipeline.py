"""
Print the Importance ARQ LangGraph experiment pipeline with its node breakdown
"""

import sys
import os

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from importance_arq_pipeline import create_experiment_pipeline

NODES = [
    ("validate_config", "Validate the simulation config and dataset spec"),
    ("load_dataset", "Read MNIST IDX files or draw the Gaussian blobs, apply the task"),
    ("run_repetitions", "One acquisition run per repetition seed [joblib when workers > 1]"),
    ("aggregate", "Mean / stderr curves on a common block grid [only if repetitions > 1]"),
    ("export_results", "CSV curves, decision traces, JSON summaries"),
    ("final_report", "Summary or error report"),
]


def print_detailed_graph():
    print("\n" + "=" * 80)
    print("IMPORTANCE ARQ - LANGGRAPH EXPERIMENT PIPELINE")
    print("=" * 80)

    graph = create_experiment_pipeline().get_graph()
    print("\nVISUAL GRAPH (ASCII):")
    print("-" * 80)
    print(graph.draw_ascii())

    print("=" * 80)
    for i, (name, description) in enumerate(NODES, start=1):
        print(f"{i}. {name:<16} {description}")
    print("\nAny node failure routes straight to final_report.")


if __name__ == "__main__":
    print_detailed_graph()
