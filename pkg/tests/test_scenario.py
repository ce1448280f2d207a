import math

import numpy as np
import pytest

from vecoffload.errors import ConfigError
from vecoffload.scenario import (EdgeNode, Scenario, ScenarioConfig,
                                 ServiceDag, ServiceSpec, TaskProfile,
                                 TrainSpec, build_scenario,
                                 bundled_config_path, generate_nodes,
                                 generate_service, load_config,
                                 sample_cpu_freq, scenario_from_json,
                                 scenario_to_json, validate_dag)


@pytest.fixture(scope="module")
def reference():
    return load_config("reference.toml")


class TestGenerateService:
    def test_mixture_before_jitter(self, reference):
        spec = ServiceSpec(task_count=10, compute_std=0.0,
                           compute_mixture=reference.service.compute_mixture)
        dag = generate_service(ScenarioConfig(service=spec), seed=123)
        demands = [t.compute_demand for t in dag.tasks]
        assert demands == [5000.0] * 4 + [2000.0] * 3 + [9000.0] * 3

    def test_mixture_cycles_past_its_length(self):
        spec = ServiceSpec(task_count=4, compute_std=0.0,
                           compute_mixture=((1, 7.0), (2, 3.0)))
        dag = generate_service(ScenarioConfig(service=spec), seed=0)
        assert [t.compute_demand for t in dag.tasks] == [7.0, 3.0, 3.0, 7.0]

    def test_deterministic_per_seed(self, reference):
        a = generate_service(reference, seed=9)
        b = generate_service(reference, seed=9)
        assert a == b
        c = generate_service(reference, seed=10)
        assert a != c

    def test_jitter_applies_around_mixture(self, reference):
        dag = generate_service(reference, seed=5)
        for task, nominal in zip(dag.tasks, [5000.0] * 4 + [2000.0] * 3 + [9000.0] * 3):
            assert task.compute_demand != nominal
            assert abs(task.compute_demand - nominal) < 6 * 500.0

    def test_sequence_topology(self, reference):
        dag = generate_service(reference, seed=1)
        assert dag.topology_kind == "sequence"
        assert [(s, d) for s, d, _ in dag.edges] == [(i, i + 1) for i in range(1, 10)]
        assert validate_dag(dag) == []

    def test_parallel_topology_groups_consistent(self):
        spec = ServiceSpec(task_count=12, topology="parallel", parallel_width=3)
        dag = generate_service(ScenarioConfig(service=spec), seed=4)
        assert dag.topology_kind == "parallel"
        assert validate_dag(dag) == []
        groups = {}
        for t in dag.tasks:
            if t.parallel_group is not None:
                groups.setdefault(t.parallel_group, []).append(t.id)
        assert groups, "expected at least one fork-join block"
        for members in groups.values():
            assert len(members) == 3

    def test_selective_topology_picks_branch(self):
        spec = ServiceSpec(task_count=9, topology="selective",
                           branch_lengths=(3, 5), branch_prob=1.0)
        dag = generate_service(ScenarioConfig(service=spec), seed=2)
        assert dag.task_count == 3 + 2
        spec = ServiceSpec(task_count=9, topology="selective",
                           branch_lengths=(3, 5), branch_prob=0.0)
        dag = generate_service(ScenarioConfig(service=spec), seed=2)
        assert dag.task_count == 5 + 2

    def test_loop_topology_unrolls(self):
        spec = ServiceSpec(task_count=9, topology="loop", loop_body=2, loop_iters=3)
        dag = generate_service(ScenarioConfig(service=spec), seed=2)
        assert dag.topology_kind == "loop-unrolled"
        assert dag.task_count == 1 + 2 * 3
        assert validate_dag(dag) == []

    def test_clamping_counts_and_floors(self):
        spec = ServiceSpec(task_count=50, compute_mixture=((1, 10.0),),
                           compute_std=100.0, dep_data_mean=5.0,
                           dep_data_std=100.0, interactive_data_mean=5.0,
                           interactive_data_std=100.0)
        dag = generate_service(ScenarioConfig(service=spec), seed=11)
        assert dag.clamp_count > 0
        assert all(t.compute_demand >= 0 for t in dag.tasks)
        assert all(t.interactive_data >= 0 for t in dag.tasks)
        assert all(bits >= 0 for _, _, bits in dag.edges)

    def test_per_task_interactive_override(self):
        spec = ServiceSpec(task_count=4, interactive_data_std=0.0,
                           interactive_data_per_task=(0.0, 5000.0))
        dag = generate_service(ScenarioConfig(service=spec), seed=3)
        assert [t.interactive_data for t in dag.tasks] == [0.0, 5000.0, 0.0, 5000.0]

    def test_edges_mirror_task_dep_maps(self, reference):
        dag = generate_service(reference, seed=8)
        for src, dst, bits in dag.edges:
            assert dag.task_by_id(dst).dep_data_in[src] == bits


class TestGenerateNodes:
    def test_reference_catalog(self, reference):
        nodes = generate_nodes(reference)
        kinds = [n.kind for n in nodes]
        assert kinds == ["LOCAL"] + ["BS"] * 2 + ["AP"] * 2 + ["VN"] * 6
        assert [n.cpu_freq for n in nodes if n.kind == "BS"] == [560.0, 676.0]
        assert [n.cpu_freq for n in nodes if n.kind == "AP"] == [526.0, 430.0]
        assert [n.cpu_freq for n in nodes if n.kind == "VN"] == [
            124.0, 120.0, 177.0, 144.0, 165.0, 130.0]
        assert nodes[0].cpu_freq == 100.0

    def test_reference_link_rates(self, reference):
        nodes = generate_nodes(reference)
        by_kind = {}
        for n in nodes:
            by_kind.setdefault(n.kind, n)  # first of each kind
        bs, ap, vn = by_kind["BS"], by_kind["AP"], by_kind["VN"]
        assert bs.access_rate == 50.0e6
        assert ap.access_rate == 100.0e6
        assert vn.access_rate == 300.0e6
        assert bs.backhaul[by_kind["BS"].id + 1] == 100.0e6  # BS to the other BS
        assert bs.backhaul[ap.id] == 100.0e6
        assert ap.backhaul[ap.id + 1] == 100.0e6
        assert ap.backhaul[vn.id] == 100.0e6
        assert bs.backhaul[vn.id] == 50.0e6
        assert vn.backhaul[vn.id + 1] == 300.0e6

    def test_local_links_reuse_access_rates(self, reference):
        nodes = generate_nodes(reference)
        local = nodes[0]
        assert math.isinf(local.access_rate)
        for node in nodes[1:]:
            assert node.backhaul[0] == node.access_rate
            assert local.backhaul[node.id] == node.access_rate

    def test_catalog_is_deterministic(self, reference):
        assert generate_nodes(reference, 1) == generate_nodes(reference, 2)

    def test_kind_field_discipline(self):
        with pytest.raises(ConfigError):
            EdgeNode(id=1, kind="BS", cpu_freq=100.0, access_rate=1.0)
        with pytest.raises(ConfigError):
            EdgeNode(id=1, kind="VN", cpu_freq=100.0, access_rate=1.0)
        with pytest.raises(ConfigError):
            EdgeNode(id=1, kind="WEIRD", cpu_freq=100.0, access_rate=1.0)
        with pytest.raises(ConfigError):
            EdgeNode(id=0, kind="LOCAL", cpu_freq=100.0, access_rate=1.0,
                     handoff_delay=1.0)


class TestSampleCpuFreq:
    def test_zero_std_is_nominal(self):
        rng = np.random.default_rng(0)
        assert sample_cpu_freq(560.0, 0.0, rng) == 560.0

    def test_jitter_is_seeded(self):
        a = sample_cpu_freq(560.0, 5.0, np.random.default_rng(42))
        b = sample_cpu_freq(560.0, 5.0, np.random.default_rng(42))
        assert a == b
        assert a != 560.0

    def test_draws_stay_positive(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            assert sample_cpu_freq(1.0, 10.0, rng) > 0


class TestValidateDag:
    def test_plain_chain_ok(self):
        t = [TaskProfile(id=i, compute_demand=1.0, interactive_data=0.0,
                         dep_data_in=({} if i == 1 else {i - 1: 1.0}))
             for i in (1, 2, 3)]
        dag = ServiceDag(tasks=tuple(t), edges=((1, 2, 1.0), (2, 3, 1.0)))
        assert validate_dag(dag) == []

    def test_cycle_detected(self):
        t = [TaskProfile(id=i, compute_demand=1.0, interactive_data=0.0)
             for i in (1, 2)]
        dag = ServiceDag(tasks=tuple(t), edges=((1, 2, 1.0), (2, 1, 1.0)))
        assert any("cycle" in v for v in validate_dag(dag))

    def test_unknown_edge_endpoint(self):
        t = (TaskProfile(id=1, compute_demand=1.0, interactive_data=0.0),)
        dag = ServiceDag(tasks=t, edges=((1, 9, 1.0),))
        assert any("unknown task" in v for v in validate_dag(dag))

    def test_inconsistent_parallel_group(self):
        tasks = (
            TaskProfile(id=1, compute_demand=1.0, interactive_data=0.0),
            TaskProfile(id=2, compute_demand=1.0, interactive_data=0.0,
                        parallel_group=0),
            TaskProfile(id=3, compute_demand=1.0, interactive_data=0.0,
                        parallel_group=0),
            TaskProfile(id=4, compute_demand=1.0, interactive_data=0.0),
        )
        edges = ((1, 2, 1.0), (1, 3, 1.0), (2, 4, 1.0))  # 3 dangles
        dag = ServiceDag(tasks=tasks, edges=edges)
        assert any("parallel group" in v for v in validate_dag(dag))

    def test_duplicate_ids_rejected_at_construction(self):
        tasks = (TaskProfile(id=1, compute_demand=1.0, interactive_data=0.0),
                 TaskProfile(id=1, compute_demand=2.0, interactive_data=0.0))
        with pytest.raises(ConfigError):
            ServiceDag(tasks=tasks, edges=())


class TestConfigLoading:
    def test_reference_round_trip(self, reference):
        assert reference.quota_bs == 2
        assert reference.quota_ap == 2
        assert reference.quota_vn == 6
        assert reference.action_size == 11
        assert reference.freq_jitter_std == 5.0
        assert reference.train.workers == 4
        assert reference.train.gamma == 0.99
        assert reference.train.entropy_coef == 0.01
        assert reference.train.hidden_sizes == (64, 64, 64)
        assert reference.train.episodes == 80000
        assert reference.train.discount_sweep_episodes == 60000
        assert reference.service.compute_mixture == ((4, 5000.0), (3, 2000.0),
                                                     (3, 9000.0))
        assert reference.service.compute_std == 500.0
        assert reference.vn.comm_range_state == 30
        assert reference.vn.chain().state_count == 41

    def test_bundled_names_resolve(self):
        for name in ("reference.toml", "dominant_node.toml", "dependency_trap.toml"):
            assert bundled_config_path(name).exists()
            load_config(name)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[service]\ntask_count = 3\nbogus = 1\n")
        with pytest.raises(ConfigError, match="bogus"):
            load_config(path)

    def test_parse_error_carries_location(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[service\ntask_count = 3\n")
        with pytest.raises(ConfigError, match="broken.toml"):
            load_config(path)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("no_such_config.toml")

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            ServiceSpec(task_count=0)
        with pytest.raises(ConfigError):
            ServiceSpec(compute_std=-1.0)
        with pytest.raises(ConfigError):
            ServiceSpec(dep_data_mean=float("nan"))
        with pytest.raises(ConfigError):
            ScenarioConfig(local_cpu_freq=0.0)
        with pytest.raises(ConfigError):
            ScenarioConfig(vn_penalty="sometimes")
        with pytest.raises(ConfigError):
            TrainSpec(rms_epsilon=0.0)


class TestScenarioFiles:
    def test_build_and_round_trip(self, reference):
        scenario = build_scenario(reference, seed=7)
        text = scenario_to_json(scenario)
        again = scenario_from_json(text)
        assert scenario_to_json(again) == text
        assert again.seed == 7
        assert again.config == reference
        assert again.service == scenario.service

    def test_json_is_byte_stable(self, reference):
        a = scenario_to_json(build_scenario(reference, seed=3))
        b = scenario_to_json(build_scenario(reference, seed=3))
        assert a == b

    def test_schema_version_checked(self, reference):
        text = scenario_to_json(build_scenario(reference, seed=1))
        tampered = text.replace('"schema_version": 1', '"schema_version": 99')
        with pytest.raises(ConfigError):
            scenario_from_json(tampered)

    def test_trap_scenario_materializes_designed_numbers(self):
        scenario = build_scenario(load_config("dependency_trap.toml"), seed=0)
        t1, t2 = scenario.service.tasks
        assert (t1.compute_demand, t1.interactive_data) == (1000.0, 0.0)
        assert (t2.compute_demand, t2.interactive_data) == (100.0, 5000.0)
        assert t2.dep_data_in == {1: 8000.0}
        kinds = [n.kind for n in scenario.nodes]
        assert kinds == ["LOCAL", "BS", "AP"]
        assert scenario.nodes[1].access_rate == 10.0
        assert scenario.nodes[2].access_rate == 1000.0
        assert scenario.nodes[1].backhaul[2] == 10.0
