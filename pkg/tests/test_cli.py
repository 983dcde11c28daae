"""Command-line surface: evaluation paths, parity scoring, and end-to-end
subcommand runs on tiny meshes."""
import numpy as np
import numpy.testing as npt
import pytest

from convexkan.cli import (
    EvaluationPath,
    ParityReport,
    evaluation_paths,
    main,
    r2_score,
    rel_rms,
)
from convexkan.errors import ConfigurationError
from convexkan.fem import Mesh, SpecimenDataset
from convexkan.mechanics import NeoHookean
from convexkan.network import KANModel
from convexkan.symbolic import SymbolicEnergy


def small_square_mesh(n=4):
    xs = np.linspace(0.0, 1.0, n)
    nodes = np.column_stack([np.repeat(xs, n), np.tile(xs, n)])
    tris = []
    for i in range(n - 1):
        for j in range(n - 1):
            a, b = i * n + j, (i + 1) * n + j
            tris.append((a, b, b + 1))
            tris.append((a, b + 1, a + 1))
    return Mesh(nodes=nodes, triangles=np.array(tris))


@pytest.fixture
def mesh_file(tmp_path):
    path = tmp_path / "square.mesh"
    small_square_mesh().save(path)
    return str(path)


@pytest.fixture
def dataset_file(tmp_path, mesh_file):
    out = tmp_path / "ds.txt"
    code = main(
        ["generate", "--model", "NH", "--steps", "2", "--mesh", mesh_file,
         "--out", str(out)]
    )
    assert code == 0
    return str(out)


@pytest.fixture
def checkpoint_file(tmp_path, dataset_file):
    out = tmp_path / "model.ckpt"
    code = main(
        ["train", "--dataset", dataset_file, "--epochs", "3", "--ensemble", "2",
         "--seed", "0", "--out", str(out)]
    )
    assert code == 0
    return str(out)


class TestEvaluationPaths:
    def test_canonical_set(self):
        paths = evaluation_paths()
        assert [p.kind for p in paths] == ["UT", "UC", "BT", "BC", "SS", "PS"]
        assert [p.gamma_max for p in paths] == [2.0, 1.0, 2.0, 1.0, 1.0, 1.0]
        assert all(p.samples == 41 for p in paths)

    def test_identity_at_zero(self):
        for p in evaluation_paths():
            npt.assert_array_equal(p.deformation(0.0), np.eye(3))

    def test_admissible_over_range(self):
        for p in evaluation_paths():
            for g in p.grid():
                assert np.linalg.det(p.deformation(g)) > 0.0

    def test_known_matrices(self):
        ut = EvaluationPath("UT", 2.0).deformation(0.5)
        npt.assert_array_equal(ut, np.diag([1.5, 1.0, 1.0]))
        ss = EvaluationPath("SS", 1.0).deformation(0.3)
        assert ss[0, 1] == 0.3 and ss[0, 0] == 1.0
        ps = EvaluationPath("PS", 1.0).deformation(1.0)
        npt.assert_allclose(ps, np.diag([2.0, 0.5, 1.0]))

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            EvaluationPath("XX", 1.0)


class TestScores:
    def test_rel_rms(self):
        assert rel_rms([1.0, 1.0], [1.0, 1.0]) == 0.0
        npt.assert_allclose(rel_rms([1.1, 0.9], [1.0, 1.0]), 0.1, rtol=1e-12)

    def test_r2(self):
        assert r2_score([1.0, 2.0], [1.0, 2.0]) == 1.0
        assert r2_score([2.0, 1.0], [1.0, 2.0]) < 0.0

    def test_parity_report(self, tmp_path):
        rep = ParityReport(
            i1_true=np.array([1.0, 2.0]),
            i1_learned=np.array([1.0, 2.0]),
            j_true=np.array([1.0, 1.1]),
            j_learned=np.array([1.0, 1.2]),
        )
        assert rep.r2_i1 == 1.0
        assert rep.r2_j < 1.0
        rep.write_csv(tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().strip().splitlines()
        assert lines[0].startswith("element,")
        assert len(lines) == 3


class TestGenerate:
    def test_writes_parsable_dataset(self, dataset_file):
        ds = SpecimenDataset.load(dataset_file)
        assert ds.n_snapshots == 2
        npt.assert_allclose(ds.deltas, [0.1, 0.2])
        assert ds.partition.n_reactions == 4

    def test_deterministic_given_seed(self, tmp_path, mesh_file):
        outs = []
        for name in ("a.txt", "b.txt"):
            out = tmp_path / name
            assert main(
                ["generate", "--model", "NH", "--steps", "1", "--noise", "1e-3",
                 "--seed", "5", "--mesh", mesh_file, "--out", str(out)]
            ) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_ab_delta_schedule(self, tmp_path, mesh_file):
        out = tmp_path / "ab.txt"
        assert main(
            ["generate", "--model", "AB", "--steps", "2", "--mesh", mesh_file,
             "--out", str(out)]
        ) == 0
        npt.assert_allclose(SpecimenDataset.load(out).deltas, [0.05, 0.1])

    def test_unknown_model_exits_2(self, tmp_path, mesh_file):
        assert main(
            ["generate", "--model", "ZZ", "--mesh", mesh_file,
             "--out", str(tmp_path / "x.txt")]
        ) == 2

    def test_missing_mesh_exits_2(self, tmp_path):
        assert main(
            ["generate", "--model", "NH", "--mesh", str(tmp_path / "nope.mesh"),
             "--out", str(tmp_path / "x.txt")]
        ) == 2


class TestTrain:
    def test_writes_loadable_checkpoint(self, checkpoint_file):
        model = KANModel.load(checkpoint_file)
        assert model.dims == (3, 2, 1)

    def test_member_logs(self, tmp_path, dataset_file):
        prefix = str(tmp_path / "log")
        assert main(
            ["train", "--dataset", dataset_file, "--epochs", "2", "--ensemble", "2",
             "--out", str(tmp_path / "m.ckpt"), "--log-prefix", prefix]
        ) == 0
        for k in range(2):
            lines = (tmp_path / f"log{k}.csv").read_text().strip().splitlines()
            assert lines[0] == "epoch,lr,loss" and len(lines) == 3

    def test_vanilla_ablation_mode(self, tmp_path, dataset_file):
        out = tmp_path / "v.ckpt"
        assert main(
            ["train", "--dataset", dataset_file, "--epochs", "2", "--ensemble", "1",
             "--out", str(out), "--ablation-vanilla"]
        ) == 0
        assert KANModel.load(out).mode == "vanilla"

    def test_inadmissible_dataset_exits_3(self, tmp_path, mesh_file):
        from convexkan.fem import biaxial_partition

        mesh = small_square_mesh()
        part = biaxial_partition(mesh)
        bad = SpecimenDataset(
            mesh=mesh,
            partition=part,
            deltas=[0.1],
            displacements=np.array([mesh.nodes @ (np.diag([-0.7, 1.0]) - np.eye(2)).T]),
            reactions=np.zeros((1, 4)),
        )
        path = tmp_path / "bad.txt"
        bad.save(path)
        assert main(
            ["train", "--dataset", str(path), "--epochs", "1", "--ensemble", "1",
             "--out", str(tmp_path / "m.ckpt")]
        ) == 3

    def test_missing_dataset_exits_2(self, tmp_path):
        assert main(
            ["train", "--dataset", str(tmp_path / "nope.txt"),
             "--out", str(tmp_path / "m.ckpt")]
        ) == 2


class TestEvaluate:
    def test_csv_schema_and_zero_row(self, tmp_path, checkpoint_file):
        out = tmp_path / "eval.csv"
        assert main(
            ["evaluate", "--model", "NH", "--checkpoint", checkpoint_file,
             "--samples", "5", "--out", str(out)]
        ) == 0
        lines = out.read_text().strip().splitlines()
        head = lines[0].split(",")
        assert head[:2] == ["path", "gamma"]
        assert "W_true" in head and "W_ickan" in head and "P11_true" in head
        assert len(lines) == 1 + 6 * 5
        first = dict(zip(head, lines[1].split(",")))
        assert first["path"] == "UT" and float(first["gamma"]) == 0.0
        for col in ("W_true", "P11_true", "P11_ickan"):
            assert abs(float(first[col])) < 1e-9
        assert (tmp_path / "eval.csv.summary.csv").exists()

    def test_truth_matches_closed_form(self, tmp_path, checkpoint_file):
        out = tmp_path / "eval.csv"
        main(
            ["evaluate", "--model", "NH", "--checkpoint", checkpoint_file,
             "--samples", "3", "--out", str(out)]
        )
        lines = out.read_text().strip().splitlines()
        head = lines[0].split(",")
        for line in lines[1:]:
            row = dict(zip(head, line.split(",")))
            if row["path"] == "UT" and abs(float(row["gamma"]) - 1.0) < 1e-12:
                F = np.diag([2.0, 1.0, 1.0])
                npt.assert_allclose(float(row["W_true"]), NeoHookean().energy(F), rtol=1e-8)
                break
        else:
            pytest.fail("UT gamma=1 row missing")

    def test_requires_a_model_exits_2(self, tmp_path):
        assert main(["evaluate", "--model", "NH", "--out", str(tmp_path / "e.csv")]) == 2

    def test_missing_checkpoint_exits_2(self, tmp_path):
        assert main(
            ["evaluate", "--model", "NH", "--checkpoint", str(tmp_path / "no.ckpt"),
             "--out", str(tmp_path / "e.csv")]
        ) == 2


class TestDistill:
    def test_writes_tree_and_text(self, tmp_path, checkpoint_file):
        out = tmp_path / "energy.sym"
        assert main(["distill", "--checkpoint", checkpoint_file, "--out", str(out)]) == 0
        energy = SymbolicEnergy.load(out)
        K = np.random.default_rng(0).uniform(-2.0, 10.0, size=(10, 3))
        assert np.all(np.isfinite(energy.value(K)))
        text = (tmp_path / "energy.sym.txt").read_text()
        assert text.strip()


class TestSimulate:
    def test_oracle_injection_perfect_parity(self, tmp_path, mesh_file):
        # a symbolic energy identical to NH: 0.5*K1 + 1.5*K3
        sym = tmp_path / "nh.sym"
        sym.write_text("convexkan-symbolic v1\nenergy affine 0 0.5 0 1.5\n")
        out = tmp_path / "sim"
        assert main(
            ["simulate", "--model", "NH", "--symbolic", str(sym), "--mesh", mesh_file,
             "--delta", "0.1", "--steps", "2", "--out", str(out)]
        ) == 0
        parity = (tmp_path / "sim.parity.csv").read_text().strip().splitlines()
        assert parity[0].startswith("element,")
        for line in parity[1:]:
            _, a, b, c, d = line.split(",")
            npt.assert_allclose(float(a), float(b), rtol=1e-9)
            npt.assert_allclose(float(c), float(d), rtol=1e-9)
        reacts = (tmp_path / "sim.reactions.csv").read_text().strip().splitlines()
        assert len(reacts) == 3  # header + 2 load steps
        assert (tmp_path / "sim.true.disp").exists()
        assert (tmp_path / "sim.sym.disp").exists()

    def test_symbolic_oracle_matches_truth_energy(self, tmp_path):
        sym_text = "convexkan-symbolic v1\nenergy affine 0 0.5 0 1.5\n"
        energy = SymbolicEnergy.loads(sym_text)
        from convexkan.symbolic import SymbolicMaterial

        mat = SymbolicMaterial(energy)
        F = np.diag([1.4, 0.9, 1.0])
        npt.assert_allclose(mat.energy(F), NeoHookean().energy(F), rtol=1e-10)

    def test_needs_exactly_one_model_exits_2(self, tmp_path, mesh_file):
        assert main(
            ["simulate", "--model", "NH", "--mesh", mesh_file,
             "--out", str(tmp_path / "s")]
        ) == 2
