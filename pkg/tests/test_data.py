"""Quarter labels, transform codes, CSV ingestion, design alignment."""

import numpy as np
import pytest

from tvpdr.data import (
    MacroDataset,
    apply_transform,
    assemble_design,
    format_quarter,
    inflation,
    load_csv,
    load_schema,
    parse_quarter,
)


def test_quarter_labels_round_trip():
    assert parse_quarter("1990Q1") == 4 * 1990
    assert parse_quarter("1990Q4") - parse_quarter("1990Q1") == 3
    assert parse_quarter("1991Q1") - parse_quarter("1990Q4") == 1
    for label in ("1959Q2", "2024Q4", "0001Q1"):
        assert format_quarter(parse_quarter(label)) == label
    for bad in ("1990q1", "1990Q5", "1990Q0", "199Q1", "1990-Q1"):
        with pytest.raises(ValueError):
            parse_quarter(bad)


def test_transform_codes():
    v = np.array([1.0, 2.0, 4.0, 8.0])
    assert np.array_equal(apply_transform(v, 1), v)
    d1 = apply_transform(v, 2)
    assert np.isnan(d1[0]) and np.allclose(d1[1:], [1.0, 2.0, 4.0])
    d2 = apply_transform(v, 3)
    assert np.all(np.isnan(d2[:2])) and np.allclose(d2[2:], [1.0, 2.0])
    lg = apply_transform(v, 4)
    assert np.allclose(lg, np.log(v))
    dl = apply_transform(v, 5)
    assert np.isnan(dl[0]) and np.allclose(dl[1:], np.log(2.0))
    ddl = apply_transform(v, 6)
    assert np.all(np.isnan(ddl[:2])) and np.allclose(ddl[2:], 0.0)
    with pytest.raises(ValueError):
        apply_transform(v, 7)
    with pytest.raises(ValueError, match="non-positive"):
        apply_transform(np.array([1.0, -1.0]), 5, "prices")


def test_inflation_annualized_log_difference():
    p = np.array([100.0, 101.0, 102.0, 103.0])
    pi1 = inflation(p, 1)
    assert np.isnan(pi1[0])
    assert np.allclose(pi1[1:], 400.0 * np.diff(np.log(p)))
    pi2 = inflation(p, 2)
    assert np.all(np.isnan(pi2[:2]))
    assert np.allclose(pi2[2:], 200.0 * (np.log(p[2:]) - np.log(p[:-2])))
    # a price level that doubles every quarter at horizon 4
    p2 = 100.0 * 2.0 ** np.arange(6)
    assert np.allclose(inflation(p2, 4)[4:], 100.0 * 4.0 * np.log(2.0))


def make_dates(start="2000Q1", n=12):
    i = parse_quarter(start)
    return tuple(format_quarter(i + k) for k in range(n))


def test_dataset_validates_axis():
    with pytest.raises(ValueError, match="gap"):
        MacroDataset(dates=("2000Q1", "2000Q3"), series={}, codes={})
    with pytest.raises(ValueError, match="span"):
        MacroDataset(dates=make_dates(n=3), series={"a": np.zeros(2)}, codes={})


def test_with_inflation_and_gap_columns():
    n = 12
    ds = MacroDataset(
        dates=make_dates(n=n),
        series={"P": 100.0 * 1.005 ** np.arange(n),
                "UNRATE": np.linspace(6.0, 4.0, n),
                "NROU": np.full(n, 4.5)},
        codes={"P": 1, "UNRATE": 1, "NROU": 1},
    )
    ds2 = ds.with_inflation("P", 1)
    assert ds2.target == "infl_P_1q" and ds2.horizon == 1
    assert np.isclose(ds2.series["infl_P_1q"][1], 400.0 * np.log(1.005))
    ds3 = ds2.with_unemployment_gap()
    assert np.allclose(ds3.series["ugap"], ds2.series["UNRATE"] - 4.5)
    # shifting is inclusive of both endpoints and leaves the rest alone
    ds4 = ds3.with_shift("ugap", -5.0, ("2000Q3", "2000Q4"))
    assert np.allclose(ds4.series["ugap"][2:4], ds3.series["ugap"][2:4] - 5.0)
    assert np.allclose(ds4.series["ugap"][:2], ds3.series["ugap"][:2])
    assert np.allclose(ds4.series["ugap"][4:], ds3.series["ugap"][4:])
    # exact float arithmetic on the shifted values
    base = ds3.series["ugap"][2]
    assert ds4.series["ugap"][2] == base + (-5.0)


def test_csv_round_trip(tmp_path):
    csv = tmp_path / "macro.csv"
    csv.write_text(
        "date,PCEPI,UNRATE,NROU\n"
        "2001Q1,100.0,5.0,4.8\n"
        "2001Q2,100.5,5.1,4.8\n"
        "2001Q3,101.2,5.3,4.9\n"
        "2001Q4,,5.4,4.9\n"
    )
    ds = load_csv(csv)
    assert ds.dates == ("2001Q1", "2001Q2", "2001Q3", "2001Q4")
    assert np.isnan(ds.series["PCEPI"][3])
    # UNRATE and NROU both present: the gap column appears automatically
    assert "ugap" in ds.series
    assert np.isclose(ds.series["ugap"][0], 0.2)


def test_csv_error_reporting(tmp_path):
    bad_order = tmp_path / "a.csv"
    bad_order.write_text("date,x\n2001Q1,1\n2001Q3,2\n")
    with pytest.raises(ValueError, match="2001Q3"):
        load_csv(bad_order)

    bad_cell = tmp_path / "b.csv"
    bad_cell.write_text("date,x\n2001Q1,1\n2001Q2,oops\n")
    with pytest.raises(ValueError, match="x"):
        load_csv(bad_cell)

    dup = tmp_path / "c.csv"
    dup.write_text("date,x,x\n2001Q1,1,2\n")
    with pytest.raises(ValueError, match="duplicate"):
        load_csv(dup)

    not_date = tmp_path / "d.csv"
    not_date.write_text("quarter,x\n2001Q1,1\n")
    with pytest.raises(ValueError, match="date"):
        load_csv(not_date)


def test_schema_parsing(tmp_path):
    sch = tmp_path / "schema.txt"
    sch.write_text("# codes\nPCEPI = 5\nUNRATE=1\n\n")
    schema = load_schema(sch)
    assert schema == {"PCEPI": 5, "UNRATE": 1}

    bad = tmp_path / "bad.txt"
    bad.write_text("PCEPI=9\n")
    with pytest.raises(ValueError, match="bad.txt:1"):
        load_schema(bad)

    csv = tmp_path / "macro.csv"
    csv.write_text("date,x\n2001Q1,1\n")
    with pytest.raises(ValueError, match="absent column"):
        load_csv(csv, {"nope": 1})


def test_assemble_design_alignment():
    # spelled-out example: 10 quarters, horizon 1, lag 1 gives 9 rows and
    # the target in row t is the outcome dated one quarter after the origin
    n = 10
    ds = MacroDataset(
        dates=make_dates("2010Q1", n),
        series={"P": 100.0 + np.arange(n, dtype=float), "u": np.arange(n, dtype=float)},
        codes={"P": 1, "u": 1},
    ).with_inflation("P", 1)
    aligned = assemble_design(ds, ["infl_P_1q", "u"], lag=1)
    assert aligned.offset == 1
    assert len(aligned.y) == 8  # one quarter lost to inflation, one to lead
    assert aligned.origin_dates[0] == "2010Q2"
    assert aligned.outcome_dates[0] == "2010Q3"
    assert aligned.x.shape == (8, 3)
    assert np.all(aligned.x[:, 0] == 1.0)
    # origin-dated covariates: the target column at the origin quarter
    assert np.isclose(aligned.x[0, 1], ds.series["infl_P_1q"][1])
    assert np.isclose(aligned.y[0], ds.series["infl_P_1q"][2])

    # horizon 2 plus lag 2 drops three leading quarters
    ds2 = MacroDataset(
        dates=make_dates("2010Q1", n),
        series={"P": 100.0 * 1.01 ** np.arange(n), "u": np.arange(n, dtype=float)},
        codes={"P": 1, "u": 1},
    ).with_inflation("P", 2)
    aligned2 = assemble_design(ds2, ["u"], lag=2)
    assert aligned2.offset == 3
    assert aligned2.origin_dates[0] == "2010Q1"
    assert aligned2.outcome_dates[0] == "2010Q4"


def test_assemble_design_interior_gap_is_an_error():
    n = 10
    u = np.arange(n, dtype=float)
    u[5] = np.nan
    ds = MacroDataset(
        dates=make_dates("2010Q1", n),
        series={"P": 100.0 + np.arange(n, dtype=float), "u": u},
        codes={"P": 1, "u": 1},
    ).with_inflation("P", 1)
    with pytest.raises(ValueError, match="interior missing"):
        assemble_design(ds, ["u"])
    with pytest.raises(ValueError, match="no inflation target"):
        assemble_design(
            MacroDataset(dates=make_dates(n=4), series={"u": np.zeros(4)}, codes={}),
            ["u"],
        )
