import pytest

from qcurv.barycenter_homology import (ChainComplexGF2, SimplicialComplex,
                                       barycenter_complex,
                                       barycentric_subdivision,
                                       complex_from_maximal, homology,
                                       triangulate_model)


def _chain_complex(cx):
    return ChainComplexGF2([[frozenset(s) for s in lev]
                            for lev in cx.simplices])


def test_circle_betti():
    assert homology(triangulate_model("circle", 5)) == (1, 1)


def test_sphere2_betti():
    assert homology(triangulate_model("sphere2", 1)) == (1, 0, 1)
    assert homology(triangulate_model("sphere2", 2)) == (1, 0, 1)


def test_resolution_minimums():
    with pytest.raises(ValueError):
        triangulate_model("circle", 2)
    with pytest.raises(ValueError):
        triangulate_model("sphere2", 0)


def test_complex_validation():
    with pytest.raises(ValueError):
        SimplicialComplex(n_vertices=3, simplices=(((0,), (1,)),
                                                   (((0, 1),) * 2)))
    with pytest.raises(ValueError):
        # not closed under faces
        SimplicialComplex(n_vertices=3, simplices=(((0,), (1,)),
                                                   ((1, 2),)))


def test_dd_zero_everywhere():
    for cx in (triangulate_model("circle", 5),
               triangulate_model("sphere2", 1),
               barycenter_complex(triangulate_model("circle", 3), 2).ambient):
        assert _chain_complex(cx).check_dd_zero()


def test_betti_invariant_under_subdivision():
    for kind, res in (("circle", 4), ("sphere2", 1)):
        cx = triangulate_model(kind, res)
        assert homology(cx) == homology(barycentric_subdivision(cx))


def test_order_one_is_the_model():
    m = triangulate_model("circle", 5)
    pair = barycenter_complex(m, 1)
    assert pair.ambient is m
    assert pair.sub is None
    # empty lower-order locus reproduces absolute homology
    assert homology(pair, relative=True) == homology(m)


def test_order_two_of_point_is_contractible():
    pair = barycenter_complex(triangulate_model("point", 1), 2)
    betti = homology(pair)
    assert betti[0] == 1 and all(b == 0 for b in betti[1:])


@pytest.mark.parametrize("res", [3, 4])
def test_order_two_circle_is_three_sphere(res):
    pair = barycenter_complex(triangulate_model("circle", res), 2)
    assert homology(pair) == (1, 0, 0, 1)
    assert homology(pair.sub) == (1, 1)


def test_relative_orientation_class_circle():
    pair = barycenter_complex(triangulate_model("circle", 4), 2)
    rel = homology(pair, relative=True)
    assert rel[3] >= 1
    # long exact sequence of the pair forces H2 of rank one as well
    assert rel == (0, 0, 1, 1)


def test_euler_characteristic_consistency():
    pair = barycenter_complex(triangulate_model("circle", 5), 2)
    chi_simplices = pair.ambient.euler_characteristic()
    betti = homology(pair)
    chi_betti = sum((-1) ** i * b for i, b in enumerate(betti))
    assert chi_simplices == chi_betti == 0


def test_homology_of_higher_order_rejected():
    with pytest.raises(ValueError):
        barycenter_complex(triangulate_model("circle", 4), 3)


def test_subcomplex_included_in_ambient():
    pair = barycenter_complex(triangulate_model("circle", 4), 2)
    ambient = {s for lev in pair.ambient.simplices for s in lev}
    for lev in pair.sub.simplices:
        for s in lev:
            assert s in ambient
            assert pair.inclusion[s] == s


def test_complex_from_maximal_closure():
    cx = complex_from_maximal([(0, 1, 2)])
    assert [len(l) for l in cx.simplices] == [3, 3, 1]
