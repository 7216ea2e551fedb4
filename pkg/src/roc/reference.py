"""Built-in disaster-response scenario: drones, a ground robot, and a medic
coordinating survey and triage work under tight deadlines.

The fast drone's law is tuned so that P(T <= 360 s) is about 0.82 with a 0.90
success probability, which makes it a usable anchor in tests and demos.
"""

from __future__ import annotations

from .configio import scenario_from_dict
from .simulator import ScenarioConfig


def reference_scenario_dict(
    *, mechanism: str = "roc_full", seed: int = 1, horizon: float = 1800.0
) -> dict:
    drone_initiation = [
        {"source": "state", "name": "battery", "op": ">", "value": 30},
        {"source": "context", "name": "distance_m", "op": "<=", "value": 80},
        {"source": "context", "name": "link", "op": "==", "value": 1.0},
    ]
    survey_truth = {
        "time": {"kind": "lognormal", "median": 240.0, "sigma": 0.443, "upper": 1800.0},
        "success": {"base": 0.9},
        "metrics": {
            "safety_risk": {"kind": "lognormal", "median": 0.25, "sigma": 0.5, "upper": 1.0}
        },
    }
    return {
        "horizon": horizon,
        "seed": seed,
        "mechanism": mechanism,
        "clear_tick": 10.0,
        "resource_pools": {"operator_attention": 3.0},
        "solver": {"mode": "greedy_plus_local_search", "allow_backups": True},
        "utility": {"cost_weight": 0.05},
        "risk": {"measure": "deadline_violation_prob", "lambda": 1.0},
        "bucket": {"ranges": {"distance_m": [20.0, 120.0]}, "bins": 4},
        "task_templates": [
            {
                "goal_label": "survey_stairwell",
                "rate_per_hour": 10.0,
                "deadline": {"kind": "fixed", "value": 360.0},
                "constraints": {
                    "required_roles": [],
                    "deadline_confidence": 0.7,
                    "metric_limits": [
                        {"metric": "safety_risk", "limit": 0.9, "confidence": 0.5}
                    ],
                    "resource_demands": {"operator_attention": 1.0},
                },
                "context": {
                    "distance_m": {"kind": "uniform", "low": 20.0, "high": 120.0},
                    "link": {"kind": "fixed", "value": 1.0},
                    "smoke": {"kind": "uniform", "low": 0.0, "high": 1.0},
                },
            },
            {
                "goal_label": "onsite_triage",
                "rate_per_hour": 5.0,
                "deadline": {"kind": "fixed", "value": 900.0},
                "constraints": {
                    "required_roles": ["medic"],
                    "deadline_confidence": 0.5,
                    "resource_demands": {"operator_attention": 1.0},
                },
                "context": {
                    "distance_m": {"kind": "uniform", "low": 20.0, "high": 120.0},
                    "link": {"kind": "fixed", "value": 1.0},
                },
            },
        ],
        "roster": [
            {
                "agent_id": "drone-1",
                "kind": "robot",
                "roles": ["aerial"],
                "state": {"battery": 45.0},
                "reporting": {"kind": "truthful"},
                "failure_rate_per_hour": 0.0,
                "options": [
                    {
                        "option_id": "survey_stairwell",
                        "label": "SurveyStairwell",
                        "initiation": drone_initiation,
                        "nominal_cost": 1.0,
                        "ground_truth": survey_truth,
                    }
                ],
            },
            {
                "agent_id": "drone-2",
                "kind": "robot",
                "roles": ["aerial"],
                "state": {"battery": 62.0},
                "reporting": {"kind": "overconfident", "gamma": 0.6, "delta": 0.05},
                "failure_rate_per_hour": 0.0,
                "options": [
                    {
                        "option_id": "survey_stairwell",
                        "label": "SurveyStairwell",
                        "initiation": drone_initiation,
                        "nominal_cost": 1.0,
                        "ground_truth": {
                            "time": {
                                "kind": "lognormal",
                                "median": 260.0,
                                "sigma": 0.5,
                                "upper": 1800.0,
                            },
                            "success": {"base": 0.88},
                            "metrics": {
                                "safety_risk": {
                                    "kind": "lognormal",
                                    "median": 0.3,
                                    "sigma": 0.5,
                                    "upper": 1.0,
                                }
                            },
                        },
                    }
                ],
            },
            {
                "agent_id": "robot-1",
                "kind": "robot",
                "roles": ["ground"],
                "state": {"battery": 80.0},
                "reporting": {"kind": "truthful"},
                "failure_rate_per_hour": 0.0,
                "options": [
                    {
                        "option_id": "survey_stairwell",
                        "label": "SurveyStairwell",
                        "initiation": [],
                        "nominal_cost": 2.0,
                        "ground_truth": {
                            "time": {
                                "kind": "lognormal",
                                "median": 300.0,
                                "sigma": 0.25,
                                "upper": 1800.0,
                            },
                            "success": {"base": 0.97},
                            "metrics": {
                                "safety_risk": {
                                    "kind": "lognormal",
                                    "median": 0.15,
                                    "sigma": 0.4,
                                    "upper": 1.0,
                                }
                            },
                        },
                    }
                ],
            },
            {
                "agent_id": "medic-1",
                "kind": "human",
                "roles": ["medic"],
                "state": {"battery": 100.0},
                "reporting": {"kind": "truthful"},
                "failure_rate_per_hour": 0.0,
                "options": [
                    {
                        "option_id": "onsite_triage",
                        "label": "OnSiteTriage",
                        "initiation": [],
                        "nominal_cost": 3.0,
                        "ground_truth": {
                            "time": {
                                "kind": "lognormal",
                                "median": 420.0,
                                "sigma": 0.35,
                                "upper": 3600.0,
                            },
                            "success": {"base": 0.95},
                        },
                    }
                ],
            },
        ],
    }


def reference_scenario(
    *, mechanism: str = "roc_full", seed: int = 1, horizon: float = 1800.0
) -> ScenarioConfig:
    return scenario_from_dict(
        reference_scenario_dict(mechanism=mechanism, seed=seed, horizon=horizon)
    )
