import numpy as np

from dragforge.grid import Grid
from dragforge.viz import grid_view_png, grid_view_rgb


class TestGridView:
    def test_single_channel_grayscale(self):
        data = np.array([[[0.0], [1.0]], [[2.0], [4.0]]], dtype=np.float32)
        rgb = grid_view_rgb(Grid(data))
        assert rgb.shape == (2, 2, 3)
        assert (rgb[:, :, 0] == rgb[:, :, 1]).all()
        assert rgb[0, 0, 0] == 0 and rgb[1, 1, 0] == 255

    def test_three_channels_pass_through_scaled(self):
        rng = np.random.default_rng(0)
        rgb = grid_view_rgb(Grid.from_array(rng.normal(size=(5, 6, 3))))
        assert rgb.dtype == np.uint8
        assert rgb.min() == 0 and rgb.max() == 255

    def test_many_channels_project_deterministically(self):
        rng = np.random.default_rng(1)
        g = Grid.from_array(rng.normal(size=(8, 8, 6)))
        a = grid_view_rgb(g)
        b = grid_view_rgb(g)
        assert np.array_equal(a, b)
        assert a.shape == (8, 8, 3)

    def test_constant_grid_is_mid_gray(self):
        rgb = grid_view_rgb(Grid.full(3, 3, 4, 7.0))
        assert (rgb == 128).all()

    def test_png_bytes(self):
        blob = grid_view_png(Grid.full(4, 4, 1, 1.0))
        assert blob[:8] == b"\x89PNG\r\n\x1a\n"


class TestViewEndpoint:
    def test_view_endpoints_serve_png(self, tmp_path):
        from fastapi.testclient import TestClient

        from dragforge.scenarios import bump_drag_scenario, write_scenario
        from dragforge.service import create_app

        scene = write_scenario(bump_drag_scenario(), tmp_path / "scene").parent
        app = create_app(session_root=str(tmp_path / "s"))
        with TestClient(app) as client:
            files = {
                "latent": ("latent.dft1", (scene / "latent.dft1").read_bytes()),
                "features": (
                    "seg_features.dft1",
                    (scene / "seg_features.dft1").read_bytes(),
                ),
            }
            sid = client.post("/sessions", files=files).json()["id"]
            for name in ("latent", "features"):
                resp = client.get(f"/sessions/{sid}/view/{name}")
                assert resp.status_code == 200
                assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"
            assert client.get(f"/sessions/{sid}/view/bogus").status_code == 404
