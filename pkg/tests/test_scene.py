"""Scene text serialization, parsing, and the top-down raster."""

from dataclasses import replace

import numpy as np
import pytest

from cotdrive.scenario import default_config, spawn_scenario, step
from cotdrive.scene import (COLOR_BACKGROUND, COLOR_EGO, COLOR_LANE,
                            COLOR_VEHICLE, MAX_NEIGHBORS,
                            NO_VEHICLES_SENTINEL, parse_scene_text,
                            rasterize_topdown, serialize_scene)
from cotdrive.world import RoadNetwork, UnknownVehicleError, VehicleState


def highway_world(vehicles):
    base = spawn_scenario(default_config("highway", n_background=0))
    return replace(base, vehicles=tuple(vehicles))


def make_ego(pos=(100.0, 4.0), speed=20.0, s=150.0):
    return VehicleState(id=0, position=pos, heading=0.0, speed=speed,
                        lane_ref=("h1", s), kind="ego")


class TestSerializeScene:
    def test_empty_road_uses_sentinel(self):
        world = highway_world([make_ego()])
        desc = serialize_scene(world, 0)
        assert NO_VEHICLES_SENTINEL in desc.text
        assert "VEHICLES: 0" in desc.text
        assert desc.structured.neighbors == ()

    def test_golden_three_neighbor_text(self):
        vehicles = [
            make_ego(),
            VehicleState(id=1, position=(130.0, 4.0), heading=0.0, speed=15.0,
                         lane_ref=("h1", 180.0)),
            VehicleState(id=2, position=(85.0, 8.0), heading=0.0, speed=18.0,
                         lane_ref=("h2", 135.0)),
            VehicleState(id=3, position=(120.0, 0.0), heading=0.0, speed=16.0,
                         lane_ref=("h0", 170.0)),
        ]
        desc = serialize_scene(highway_world(vehicles), 0)
        assert desc.text == (
            "ROAD: highway\n"
            "CONDITIONS: clear\n"
            "EGO: lane_index=1 speed=20.0 target_speed=20.0 speed_cap=30.0\n"
            "VEHICLES: 3\n"
            "- rel=+1 dist=-15.0 speed=18.0\n"
            "- rel=-1 dist=20.0 speed=16.0\n"
            "- rel=0 dist=30.0 speed=15.0\n"
        )

    def test_out_of_range_vehicle_dropped(self):
        vehicles = [
            make_ego(),
            VehicleState(id=1, position=(200.0, 4.0), heading=0.0, speed=15.0,
                         lane_ref=("h1", 250.0)),
        ]
        desc = serialize_scene(highway_world(vehicles), 0)
        assert desc.structured.neighbors == ()

    def test_neighbor_list_capped(self):
        vehicles = [make_ego()]
        for i in range(1, 12):
            vehicles.append(VehicleState(
                id=i, position=(100.0 + 3.5 * i, 8.0), heading=0.0, speed=15.0,
                lane_ref=("h2", 150.0 + 3.5 * i)))
        desc = serialize_scene(highway_world(vehicles), 0)
        assert len(desc.structured.neighbors) == MAX_NEIGHBORS

    def test_condition_flags_listed(self):
        base = spawn_scenario(default_config(
            "highway", n_background=0, condition_flags=("wet", "low_visibility")))
        world = replace(base, vehicles=(make_ego(),))
        desc = serialize_scene(world, 0)
        assert "CONDITIONS: low_visibility, wet" in desc.text

    def test_intersection_has_conflict_lines(self):
        world = spawn_scenario(default_config("intersection", seed=1))
        desc = serialize_scene(world, 0)
        assert "CONFLICT: distance=52.5" in desc.text
        # crossing traffic starts beyond sensing range; drive closer
        for _ in range(90):
            world = step(world)
        desc = serialize_scene(world, 0)
        assert "rel=cross" in desc.text
        assert any(nb.conflict_dist is not None
                   for nb in desc.structured.neighbors)

    def test_merge_distance_reported_on_ramp(self):
        world = spawn_scenario(default_config("merge", n_background=0))
        desc = serialize_scene(world, 0)
        assert "MERGE: distance_to_end=300.0" in desc.text

    def test_requires_ego_vehicle(self):
        vehicles = [make_ego(),
                    VehicleState(id=1, position=(130.0, 4.0), heading=0.0,
                                 speed=15.0, lane_ref=("h1", 180.0))]
        with pytest.raises(UnknownVehicleError):
            serialize_scene(highway_world(vehicles), 1)

    def test_deterministic(self):
        world = spawn_scenario(default_config("roundabout", seed=5))
        assert serialize_scene(world, 0) == serialize_scene(world, 0)


class TestParseSceneText:
    @pytest.mark.parametrize("kind", ["highway", "intersection", "roundabout", "merge"])
    def test_round_trip_recovers_struct(self, kind):
        world = spawn_scenario(default_config(kind, seed=2))
        desc = serialize_scene(world, 0)
        assert parse_scene_text(desc.text) == desc.structured

    def test_scene_embedded_in_prompt(self):
        world = spawn_scenario(default_config("highway", seed=2))
        desc = serialize_scene(world, 0)
        prompt = "You are driving.\n\n" + desc.text + "\nDescribe the scene."
        assert parse_scene_text(prompt) == desc.structured

    def test_unparseable_text_rejected(self):
        with pytest.raises(ValueError):
            parse_scene_text("hello there")


class StubWorld:
    def __init__(self, road, vehicles):
        self.road = road
        self.vehicles = tuple(vehicles)

    def ego(self):
        for v in self.vehicles:
            if v.kind == "ego":
                return v
        raise UnknownVehicleError("no ego")


def pixel_counts(ppm_bytes, w, h):
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    assert ppm_bytes.startswith(header)
    img = np.frombuffer(ppm_bytes[len(header):], dtype=np.uint8).reshape(h, w, 3)
    return {color: int(np.all(img == color, axis=-1).sum())
            for color in (COLOR_BACKGROUND, COLOR_LANE, COLOR_VEHICLE, COLOR_EGO)}


class TestRasterize:
    def test_empty_world_is_all_background(self):
        world = StubWorld(RoadNetwork([]), [])
        out = rasterize_topdown(world, viewport=40.0, size=(64, 64))
        counts = pixel_counts(out, 64, 64)
        assert counts[COLOR_BACKGROUND] == 64 * 64

    def test_vehicle_pixel_area_matches_footprint(self):
        # 200 px over a 20 m viewport = 10 px/m, so a 5 m x 2 m car covers
        # about 10 m^2 * 100 px/m^2 = 1000 pixels
        ego = VehicleState(id=0, position=(0.0, 0.0), heading=0.0, speed=0.0,
                           kind="ego")
        world = StubWorld(RoadNetwork([]), [ego])
        out = rasterize_topdown(world, viewport=20.0, size=(200, 200))
        counts = pixel_counts(out, 200, 200)
        assert counts[COLOR_EGO] == pytest.approx(1000, rel=0.1)
        assert counts[COLOR_VEHICLE] == 0

    def test_full_scenario_uses_all_layer_colors(self):
        world = spawn_scenario(default_config("intersection", seed=1))
        out = rasterize_topdown(world, viewport=120.0, size=(128, 128))
        counts = pixel_counts(out, 128, 128)
        assert counts[COLOR_BACKGROUND] > 0
        assert counts[COLOR_LANE] > 0
        assert counts[COLOR_VEHICLE] > 0
        assert counts[COLOR_EGO] > 0

    def test_deterministic_bytes(self):
        world = spawn_scenario(default_config("merge", seed=3))
        assert (rasterize_topdown(world, 80.0, (96, 96))
                == rasterize_topdown(world, 80.0, (96, 96)))

    def test_invalid_arguments_rejected(self):
        world = spawn_scenario(default_config("highway", n_background=0))
        with pytest.raises(ValueError):
            rasterize_topdown(world, 40.0, (32, 64))
        with pytest.raises(ValueError):
            rasterize_topdown(world, 0.0, (64, 64))
