import pytest

from hazmob import synth
from hazmob.geoindex import build_index
from hazmob.hazardclass import classify_heat_quartile, classify_percentile
from hazmob.model import CensusTract


def unit_square_tract(geoid: str, col: float, row: float, population: int = 1000,
                      minority: float = 0.5, poverty: float = 0.3) -> CensusTract:
    ring = (
        (col, row), (col + 1.0, row), (col + 1.0, row + 1.0), (col, row + 1.0), (col, row),
    )
    return CensusTract(
        geoid=geoid,
        geometry=((ring,),),
        population=population,
        pct_minority=minority,
        pct_below_poverty200=poverty,
    )


def classify_world_masks(world):
    """Run the real classifiers over a synthetic world's value layers."""
    return {
        "air_pollution": classify_percentile(world.layers["air_pollution"]),
        "toxic": classify_percentile(world.layers["toxic"]),
        "heat": classify_heat_quartile(world.layers["heat"], world.tracts),
    }


@pytest.fixture(scope="session")
def small_world():
    """A compact natural-mode world shared by the cheaper pipeline tests."""
    config = synth.WorldConfig(
        seed=101, grid_n=6, hazard_autocorr=1, decay_alpha=2.5,
        users=72, stops_per_user=40,
    )
    return synth.gen_world(config)


@pytest.fixture(scope="session")
def small_world_index(small_world):
    return build_index(small_world.tracts, cell_size_deg=0.5)
