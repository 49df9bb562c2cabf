import numpy as np
import pytest

from linkmse.analysis.ingest import (
    FieldKind,
    FieldSpec,
    load_lists,
    load_schema,
    membership,
    parse_value,
    read_membership,
    read_record_store,
    standardize_names,
    write_record_store,
)
from linkmse.core.errors import ConfigError, IngestError


class TestStandardizeNames:
    """Test name standardization"""

    def test_accents_folded(self):
        """Test accented letters fold to ASCII"""
        assert standardize_names("José Ángel") == ("JOSE", "ANGEL")

    def test_tokenized(self):
        """Test whitespace tokenization and uppercasing"""
        assert standardize_names("de la CRUZ") == ("DE", "LA", "CRUZ")

    def test_empty_is_missing(self):
        """Test empty and punctuation-only input"""
        assert standardize_names("") is None
        assert standardize_names("  .- ") is None
        assert standardize_names(None) is None

    def test_punctuation(self):
        """Test apostrophes are dropped and hyphens break tokens"""
        assert standardize_names("O'Neil-Peña") == ("ONEIL", "PENA")


class TestSchema:
    """Test schema loading"""

    def test_load_schema(self, schema_file):
        """Test field order, kinds and required flags"""
        schema = load_schema(schema_file)
        assert schema.names == ["given_name", "family_name", "year", "month", "day", "place"]
        assert schema.fields[0].required is True
        assert schema.fields[4].kind == FieldKind.DAY

    def test_missing_kind(self, tmp_path):
        """Test a field without a kind"""
        path = tmp_path / "schema.ini"
        path.write_text("[given_name]\nrequired = true\n")
        with pytest.raises(ConfigError, match="has no kind"):
            load_schema(path)

    def test_unknown_kind(self, tmp_path):
        """Test a kind outside the supported set"""
        path = tmp_path / "schema.ini"
        path.write_text("[age]\nkind = integer\n")
        with pytest.raises(ConfigError, match="Invalid schema"):
            load_schema(path)

    def test_unknown_field(self, schema_file):
        """Test looking up a field that is not in the schema"""
        with pytest.raises(ConfigError, match="Unknown field"):
            load_schema(schema_file).index("age")


class TestParseValue:
    """Test per-kind cell parsing"""

    def test_date_out_of_range(self):
        """Test a month beyond 12"""
        with pytest.raises(IngestError, match="outside 1-12"):
            parse_value("13", FieldSpec(name="month", kind=FieldKind.MONTH), "row 2")

    def test_date_unparseable(self):
        """Test a non-numeric date component"""
        with pytest.raises(IngestError, match="unparseable"):
            parse_value("March", FieldSpec(name="month", kind=FieldKind.MONTH), "row 2")

    def test_categorical(self):
        """Test categorical values are standardized to one string"""
        assert parse_value(" san  salvador ", FieldSpec(name="place", kind=FieldKind.CATEGORICAL), "x") == "SAN SALVADOR"


class TestLoadLists:
    """Test loading K lists"""

    def test_concatenation_order(self, schema_file, list_files):
        """Test global indices run across lists in order"""
        sources, records = load_lists(list_files, load_schema(schema_file))
        assert [s.size for s in sources] == [3, 2]
        assert [r.record_index for r in records] == [0, 1, 2, 3, 4]
        assert membership(records).tolist() == [1, 1, 1, 2, 2]

    def test_missing_cell(self, schema_file, list_files):
        """Test an empty day cell is missing and the load succeeds"""
        _, records = load_lists(list_files, load_schema(schema_file))
        assert records[1].values[4] is None
        assert records[1].values[1] == ("DE", "LA", "CRUZ")

    def test_labels_carried(self, schema_file, list_files):
        """Test record labels are kept when present"""
        _, records = load_lists(list_files, load_schema(schema_file))
        assert records[0].label == "a1"
        assert records[3].label is None

    def test_single_list(self, schema_file, list_files):
        """Test one list is rejected"""
        with pytest.raises(IngestError, match="need at least two lists"):
            load_lists(list_files[:1], load_schema(schema_file))

    def test_unknown_column(self, schema_file, list_files, tmp_path):
        """Test a header column missing from the schema"""
        bad = tmp_path / "bad.csv"
        bad.write_text("given_name,age\nJuan,30\n")
        with pytest.raises(IngestError, match="columns not in schema"):
            load_lists([list_files[0], bad], load_schema(schema_file))

    def test_required_column_missing(self, schema_file, list_files, tmp_path):
        """Test a list without a required column"""
        bad = tmp_path / "bad.csv"
        bad.write_text("family_name\nPerez\n")
        with pytest.raises(IngestError, match="required columns missing"):
            load_lists([list_files[0], bad], load_schema(schema_file))

    def test_duplicate_header(self, schema_file, list_files, tmp_path):
        """Test duplicated header names"""
        bad = tmp_path / "bad.csv"
        bad.write_text("given_name,given_name\nJuan,Jose\n")
        with pytest.raises(IngestError, match="duplicate header"):
            load_lists([list_files[0], bad], load_schema(schema_file))

    def test_not_utf8(self, schema_file, list_files, tmp_path):
        """Test a Latin-1 encoded list is reported as an ingest error"""
        bad = tmp_path / "latin1.csv"
        bad.write_bytes("given_name,family_name\nJosé,Peña\n".encode("latin-1"))
        with pytest.raises(IngestError, match="not UTF-8"):
            load_lists([list_files[0], bad], load_schema(schema_file))

    def test_ragged_rows(self, schema_file, list_files, tmp_path):
        """Test a row with more cells than the header"""
        bad = tmp_path / "ragged.csv"
        bad.write_text("given_name,family_name\nJuan,Perez\nAna,Diaz,1980,extra\n")
        with pytest.raises(IngestError, match="malformed CSV"):
            load_lists([list_files[0], bad], load_schema(schema_file))


class TestRecordStore:
    """Test the record store file"""

    def test_store_reload(self, schema_file, list_files, tmp_path):
        """Test a written store reloads to the same records"""
        schema = load_schema(schema_file)
        _, records = load_lists(list_files, schema)
        store = tmp_path / "records.csv"
        write_record_store(store, schema, records)
        assert store.read_text().splitlines()[0].startswith("__list,__idx,record_label")
        sources, reloaded = read_record_store(store, schema)
        assert [s.size for s in sources] == [3, 2]
        assert [r.values for r in reloaded] == [r.values for r in records]
        assert [r.label for r in reloaded] == [r.label for r in records]

    def test_read_membership(self, schema_file, list_files, tmp_path):
        """Test reading only the list column"""
        schema = load_schema(schema_file)
        _, records = load_lists(list_files, schema)
        store = tmp_path / "records.csv"
        write_record_store(store, schema, records)
        assert np.array_equal(read_membership(store), [1, 1, 1, 2, 2])

    def test_not_a_store(self, schema_file, list_files):
        """Test a raw list file is not accepted as a store"""
        with pytest.raises(IngestError, match="not a record store"):
            read_record_store(list_files[0], load_schema(schema_file))
        with pytest.raises(IngestError, match="not a record store"):
            read_membership(list_files[0])
