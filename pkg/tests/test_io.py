import numpy as np
import pytest

from uwtransport import io
from uwtransport.mesh import build_mesh
from uwtransport.reconstruct import VoxelField


def test_structured_points_roundtrip(tmp_path, rng):
    values = rng.standard_normal((3, 5))
    path = tmp_path / "v.vtk"
    io.write_structured_points(path, values, "u")
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DIMENSIONS 6 4 1" in lines
    assert "CELL_DATA 15" in lines
    name, back = io.read_vtk_scalars(path)
    assert name == "u"
    np.testing.assert_array_equal(back, values.ravel())


def test_point_data_layout(tmp_path):
    mesh = build_mesh(2, 3)
    path = tmp_path / "p.vtk"
    io.write_point_data(path, mesh, np.arange(12.0), "pressure")
    text = path.read_text()
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert "POINTS 12 double" in text
    assert "CELLS 6 30" in text
    assert text.count("\n9") == 6
    # first quad is counter-clockwise from the origin
    assert "4 0 1 4 3" in text
    np.testing.assert_array_equal(io.read_vtk_scalars(path)[1], np.arange(12.0))
    with pytest.raises(ValueError, match="vertex values"):
        io.write_point_data(path, mesh, np.zeros(5), "p")


def test_cell_data(tmp_path):
    mesh = build_mesh(2, 2)
    path = tmp_path / "c.vtk"
    io.write_cell_data(path, mesh, [1.0, 2.0, 3.0, 4.0], "speed")
    assert "CELL_DATA 4" in path.read_text()
    np.testing.assert_array_equal(io.read_vtk_scalars(path)[1], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        io.write_cell_data(path, mesh, [1.0], "speed")


def test_identical_data_gives_identical_bytes(tmp_path, rng):
    values = rng.random((4, 4))
    a, b = tmp_path / "a.vtk", tmp_path / "b.vtk"
    io.write_structured_points(a, values)
    io.write_structured_points(b, values.copy())
    assert a.read_bytes() == b.read_bytes()


def test_missing_scalars(tmp_path):
    path = tmp_path / "x.vtk"
    path.write_text("# vtk DataFile Version 3.0\nnothing\n")
    with pytest.raises(ValueError, match="SCALARS"):
        io.read_vtk_scalars(path)


def test_voxel_csv(tmp_path):
    vox = VoxelField(2, 2, np.array([[1.0, 2.0], [3.0, 4.0]]))
    path = tmp_path / "v.csv"
    io.write_voxel_csv(path, vox)
    rows = io.read_rows(path)
    assert list(rows[0]) == ["x", "y", "value"]
    assert [(float(r["x"]), float(r["y"]), float(r["value"])) for r in rows] == [
        (0.25, 0.25, 1.0),
        (0.75, 0.25, 2.0),
        (0.25, 0.75, 3.0),
        (0.75, 0.75, 4.0),
    ]


def test_rows_keep_full_precision(tmp_path):
    path = tmp_path / "r.csv"
    x = 0.1 + 0.2
    io.write_rows(path, ["a", "b"], [[x, 3], [np.float64(1 / 3), "nan"]])
    rows = io.read_rows(path)
    assert float(rows[0]["a"]) == x
    assert rows[0]["b"] == "3"
    assert float(rows[1]["a"]) == 1 / 3
