import json

import numpy as np
import pytest

from linkmse.analysis.averaging import average_closed_form
from linkmse.analysis.histories import ContingencyTable
from linkmse.analysis.linkage import LinkageChain
from linkmse.analysis.mse_lcmcr import LcmcrConfig
from linkmse.analysis.pipeline import (
    EstimationSettings,
    draw_tables,
    emit_plot_data,
    estimate_per_draw,
    load_pipeline_config,
    read_average_outputs,
    run_pipeline,
    select_draws,
    write_average_outputs,
)
from linkmse.analysis.posterior import SizePosterior
from linkmse.analysis.simulate import CaptureSpec, DistortionSpec, SimSpec, generate, write_simulation
from linkmse.core.errors import ConfigError, StageError

PRIORS = (
    "[priors]\n"
    "given_name = 0.95, 0.99, 0.99\n"
    "family_name = 0.95, 0.99, 0.99\n"
    "year = 0.90, 0.95, 0.99\n"
    "month = 0.80, 0.90, 0.99\n"
    "day = 0.70, 0.70, 0.70\n"
    "place = 0.80\n"
)


@pytest.fixture
def run_config(tmp_path):
    spec = SimSpec(n_true=30, n_lists=2, seed=5, capture=CaptureSpec(probs=[0.6, 0.6]))
    write_simulation(tmp_path / "sim", generate(spec))
    path = tmp_path / "run.ini"
    path.write_text(
        "[inputs]\nlists = sim/list1.csv, sim/list2.csv\nschema = sim/schema.ini\n\n"
        + PRIORS
        + "\n[linkage]\niterations = 40\nburnin = 10\nthin = 5\nseed = 3\n\n"
        "[estimation]\ndraws = 4\nn_max = 400\n"
    )
    return path


class TestPipelineConfig:
    """Test run configuration files"""

    def test_paths_resolve_against_config(self, run_config, tmp_path):
        """Test relative list and schema paths"""
        config = load_pipeline_config(run_config)
        assert config.lists == [tmp_path / "sim" / "list1.csv", tmp_path / "sim" / "list2.csv"]
        assert config.schema_path == tmp_path / "sim" / "schema.ini"
        assert config.linkage.mcmc.n_saved == 6
        assert config.estimation.draws == 4
        assert config.out is None

    def test_unknown_estimation_key(self, tmp_path):
        """Test a misspelled key is rejected"""
        path = tmp_path / "run.ini"
        path.write_text("[inputs]\nlists = a.csv, b.csv\nschema = s.ini\n\n" + PRIORS + "\n[estimation]\ndraw = 4\n")
        with pytest.raises(ConfigError, match="unknown \\[estimation\\] key"):
            load_pipeline_config(path)

    def test_missing_priors_stage(self, tmp_path):
        """Test a run without priors fails in the config stage"""
        path = tmp_path / "run.ini"
        path.write_text("[inputs]\nlists = a.csv, b.csv\nschema = s.ini\n")
        with pytest.raises(StageError, match="missing priors") as info:
            run_pipeline(path, tmp_path / "out")
        assert info.value.stage == "config"

    def test_missing_list_stage(self, tmp_path):
        """Test an absent list file fails in the ingest stage"""
        path = tmp_path / "run.ini"
        (tmp_path / "s.ini").write_text("[given_name]\nkind = name-string\n")
        path.write_text("[inputs]\nlists = a.csv, b.csv\nschema = s.ini\n\n" + PRIORS)
        with pytest.raises(StageError) as info:
            run_pipeline(path, tmp_path / "out")
        assert info.value.stage == "ingest"

    def test_undecodable_list_stage(self, tmp_path):
        """Test a list that is not UTF-8 fails in the ingest stage"""
        (tmp_path / "s.ini").write_text("[given_name]\nkind = name-string\n")
        (tmp_path / "a.csv").write_bytes("given_name\nJosé\n".encode("latin-1"))
        (tmp_path / "b.csv").write_text("given_name\nJuan\n")
        path = tmp_path / "run.ini"
        path.write_text("[inputs]\nlists = a.csv, b.csv\nschema = s.ini\n\n" + PRIORS)
        with pytest.raises(StageError, match="not UTF-8") as info:
            run_pipeline(path, tmp_path / "out")
        assert info.value.stage == "ingest"


class TestDrawSelection:
    """Test choosing and tabulating partition draws"""

    def test_evenly_spaced(self):
        """Test indices spread over the saved draws"""
        assert select_draws(10, 3).tolist() == [0, 4, 9]
        assert select_draws(3, 10).tolist() == [0, 1, 2]

    def test_tables_per_draw(self):
        """Test one table per selected draw, optionally on a list subset"""
        draws = np.array([[0, 0, 2], [0, 1, 2]])
        chain = LinkageChain(draws, seed=0, iterations=2, burnin=0, thin=1)
        member_of = np.array([1, 2, 3])
        tables = draw_tables(chain, [0, 1], member_of)
        assert tables[0] == ContingencyTable(3, {0b110: 1, 0b001: 1})
        assert tables[1] == ContingencyTable(3, {0b100: 1, 0b010: 1, 0b001: 1})
        sub = draw_tables(chain, [0], member_of, subset=[1, 2])
        assert sub[0] == ContingencyTable(2, {0b11: 1})


class TestEstimation:
    """Test per-draw estimation"""

    def test_two_list_note(self):
        """Test the two-list estimate carries the Lincoln-Petersen point"""
        settings = EstimationSettings(model="bma", n_max=300)
        post = settings.estimate(ContingencyTable(2, {3: 5, 2: 5, 1: 5}), seed=0)
        assert post.notes["lincoln_petersen"] == 20

    def test_seeded_per_draw(self):
        """Test sampled estimates repeat under the same seed"""
        settings = EstimationSettings(model="lcmcr", seed=9, lcmcr=LcmcrConfig(strata=2, iterations=60, burnin=0, thin=3))
        tables = [ContingencyTable(2, {3: 10, 2: 8, 1: 6})] * 2
        first = estimate_per_draw(tables, settings)
        second = estimate_per_draw(tables, settings)
        assert [p.draws.tolist() for p in first] == [p.draws.tolist() for p in second]
        assert first[0].draws.tolist() != first[1].draws.tolist()

    def test_progress_callback(self):
        """Test progress is reported after each table"""
        seen = []
        tables = [ContingencyTable(2, {3: 4, 2: 1})] * 3
        estimate_per_draw(tables, EstimationSettings(n_max=100), progress=seen.append)
        assert seen == [1, 2, 3]


class TestOutputs:
    """Test averaging output files"""

    def test_plot_series(self):
        """Test one pooled curve plus one per draw"""
        per_draw = [SizePosterior.point_mass(10), SizePosterior.point_mass(20)]
        frame = emit_plot_data(average_closed_form(per_draw), per_draw)
        assert frame["series"].unique().tolist() == ["pooled", "draw_0", "draw_1"]

    def test_plot_pooled_only(self):
        """Test an empty per-draw list"""
        frame = emit_plot_data(SizePosterior.point_mass(10), [])
        assert frame["series"].unique().tolist() == ["pooled"]

    def test_write_and_read_back(self, tmp_path):
        """Test per-draw files come back in draw order"""
        per_draw = [SizePosterior.point_mass(10), SizePosterior.point_mass(20)]
        tables = [ContingencyTable(2, {3: 10}), ContingencyTable(2, {3: 20})]
        write_average_outputs(tmp_path, average_closed_form(per_draw), [2, 10], tables)
        pooled, loaded = read_average_outputs(tmp_path)
        assert pooled.probs.tolist() == [0.5, 0.5]
        assert [p.mode for p in loaded] == [10, 20]
        decomposition = json.loads((tmp_path / "decomposition.json").read_text())
        assert decomposition["shares_percent"]["linkage"] == pytest.approx(100.0)


class TestRunPipeline:
    """Test complete runs"""

    @pytest.mark.slow
    def test_repeatable(self, run_config, tmp_path):
        """Test two runs of one config write identical outputs"""
        first = run_pipeline(run_config, tmp_path / "first")
        second = run_pipeline(run_config, tmp_path / "second")
        manifest_a = json.loads((first / "manifest.json").read_text())
        manifest_b = json.loads((second / "manifest.json").read_text())
        assert manifest_a["outputs"] == manifest_b["outputs"]
        assert manifest_a["input_digest"] == manifest_b["input_digest"]
        for name in ("records.csv", "draws.txt", "diag/summaries.csv", "average/pooled.csv", "average/plot_data.csv"):
            assert name in manifest_a["outputs"]
        assert len(list((first / "average" / "per_draw").glob("draw_*.csv"))) == 4


COMPARE_BY_YEAR = (
    "[given_name]\nmeasure = normalized-edit-distance\nbreakpoints = 0, 0.25, 0.5\n\n"
    "[family_name]\nmeasure = normalized-edit-distance\nbreakpoints = 0, 0.25, 0.5\n\n"
    "[year]\nmeasure = absolute-difference\nbreakpoints = 0, 1, 3\n\n"
    "[month]\nmeasure = absolute-difference\nbreakpoints = 0, 1, 3\n\n"
    "[day]\nmeasure = absolute-difference\nbreakpoints = 0, 2, 7\n\n"
    "[place]\nmeasure = binary\nbreakpoints = 0\n\n"
    "[options]\nblocking = year\n\n"
    "[rules]\ngiven_name = 3\nfamily_name = 3\n"
)


def interval_covers(directory, capture, estimation, seed, n_true=1000, level=0.9):
    """Simulate three mildly distorted lists, run every stage, and check the pooled interval."""
    # no date shifts or missing cells, so blocking on year never separates a true link
    spec = SimSpec(
        n_true=n_true, n_lists=3, seed=seed, capture=capture,
        distortion=DistortionSpec(typo=0.05),
    )
    write_simulation(directory / "sim", generate(spec))
    (directory / "compare.ini").write_text(COMPARE_BY_YEAR)
    path = directory / "run.ini"
    path.write_text(
        "[inputs]\nlists = sim/list1.csv, sim/list2.csv, sim/list3.csv\nschema = sim/schema.ini\n\n"
        "[compare]\nconfig = compare.ini\n\n"
        + PRIORS
        + f"\n[linkage]\niterations = 300\nburnin = 100\nthin = 10\nseed = {seed}\n\n"
        f"[estimation]\n{estimation}seed = {seed}\n"
    )
    pooled, _ = read_average_outputs(run_pipeline(path, directory / "out") / "average")
    low, high = pooled.interval(level)
    return low <= n_true <= high


@pytest.mark.slow
class TestCalibration:
    """Test interval coverage of complete runs over repeated simulations"""

    replicates = 200

    def test_independent_lists(self, tmp_path):
        """Test 90% intervals under independent capture cover the population at least 80% of the time"""
        capture = CaptureSpec(probs=[0.4, 0.5, 0.3])
        estimation = "model = bma\ndraws = 5\nn_max = 5000\n"
        hits = [
            interval_covers(tmp_path / f"rep{i}", capture, estimation, seed=100 + i)
            for i in range(self.replicates)
        ]
        assert np.mean(hits) >= 0.8

    def test_two_latent_classes(self, tmp_path):
        """Test 90% intervals under two-class heterogeneous capture cover the population at least 80% of the time"""
        capture = CaptureSpec(
            model="latent-class", weights=[0.6, 0.4], classes=[[0.6, 0.6, 0.5], [0.35, 0.3, 0.4]],
        )
        estimation = "model = lcmcr\ndraws = 5\nstrata = 5\niterations = 3000\nburnin = 1000\nthin = 10\n"
        hits = [
            interval_covers(tmp_path / f"rep{i}", capture, estimation, seed=500 + i)
            for i in range(self.replicates)
        ]
        assert np.mean(hits) >= 0.8
