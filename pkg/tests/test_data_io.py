import numpy as np
import pytest

from ltvstream.data_io import (
    DataFormatError,
    RawBatch,
    ReadStats,
    StreamConfig,
    read_stream,
    write_rows,
)


def write_csv(path, rows, header="category,target"):
    path.write_text(header + "\n" + "\n".join(rows) + ("\n" if rows else ""))


class TestChunking:
    def test_seven_rows_batch_three(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, [f"a,{i}" for i in range(7)])
        batches = list(read_stream(StreamConfig(path, batch_size=3)))
        assert [len(b.categories) for b in batches] == [3, 3, 1]
        assert [b.index for b in batches] == [0, 1, 2]
        assert [b.start_row for b in batches] == [0, 3, 6]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        assert list(read_stream(StreamConfig(path))) == []

    def test_header_only(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, [])
        assert list(read_stream(StreamConfig(path))) == []

    def test_paper_scale_chunking(self, tmp_path):
        # 18000 observations at mini-batch size 3000 -> 6 batches
        path = tmp_path / "d.csv"
        write_csv(path, [f"c{i % 4},{float(i)}" for i in range(18000)])
        batches = list(read_stream(StreamConfig(path, batch_size=3000)))
        assert len(batches) == 6
        assert all(len(b.categories) == 3000 for b in batches)


class TestOrderAndDeterminism:
    def test_concatenation_reproduces_file_order(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, [f"c{i},{float(i)}" for i in range(10)])
        batches = list(read_stream(StreamConfig(path, batch_size=4)))
        cats = [c for b in batches for c in b.categories]
        targets = np.concatenate([b.targets for b in batches])
        assert cats == [f"c{i}" for i in range(10)]
        assert np.array_equal(targets, np.arange(10.0))

    def test_two_reads_identical(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, [f"c{i % 3},{i * 1.5}" for i in range(20)])
        a = list(read_stream(StreamConfig(path, batch_size=6)))
        b = list(read_stream(StreamConfig(path, batch_size=6)))
        assert len(a) == len(b)
        for ba, bb in zip(a, b):
            assert ba.categories == bb.categories
            assert np.array_equal(ba.targets, bb.targets)


class TestErrors:
    def test_malformed_target_reports_line(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, ["a,1.0", "b,oops"])
        with pytest.raises(DataFormatError) as err:
            list(read_stream(StreamConfig(path)))
        assert err.value.line_number == 3
        assert "oops" in str(err.value)

    def test_short_row_reports_line(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, ["a,1.0", "b"])
        with pytest.raises(DataFormatError) as err:
            list(read_stream(StreamConfig(path)))
        assert err.value.line_number == 3

    def test_missing_target_skipped_with_counter(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, ["a,1.0", "b,", "c,3.0"])
        stats = ReadStats()
        batches = list(read_stream(StreamConfig(path), stats))
        assert stats.skipped_missing_target == 1
        assert stats.rows == 2
        assert batches[0].categories == ["a", "c"]

    def test_negative_target_counted_not_fatal(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, ["a,-2.0", "b,1.0"])
        stats = ReadStats()
        batches = list(read_stream(StreamConfig(path), stats))
        assert stats.negative_targets == 1
        assert len(batches[0].categories) == 2

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv(path, ["a,1.0"], header="kind,value")
        with pytest.raises(DataFormatError):
            list(read_stream(StreamConfig(path)))

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            StreamConfig("x.csv", batch_size=0)


class TestWriteRows:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "d.csv"
        write_rows(path, [("a", 1.5), ("b", 2.0)])
        batches = list(read_stream(StreamConfig(path, batch_size=10)))
        assert batches[0].categories == ["a", "b"]
        assert np.array_equal(batches[0].targets, np.array([1.5, 2.0]))

    def test_custom_columns_and_delimiter(self, tmp_path):
        path = tmp_path / "d.csv"
        write_rows(path, [("a", 1.0)], category_column="k", target_column="v", delimiter=";")
        cfg = StreamConfig(path, category_column="k", target_column="v", delimiter=";")
        batches = list(read_stream(cfg))
        assert batches[0].categories == ["a"]
