import hashlib

import numpy as np
import pytest

from segflow.datasets import (BEE_LABELS, bee_sample_path, content_hash, load_bee, load_csv, load_sequence,
                              write_csv)
from segflow.errors import DataFormatError
from segflow.generators import LabeledSequence


def write(path, text):
    path.write_text(text)
    return str(path)


def test_bundled_bee_sample():
    sequence = load_bee(bee_sample_path())
    assert sequence.d == 4
    assert sequence.T == 60
    assert set(sequence.labels.tolist()) <= {0, 1, 2}
    np.testing.assert_allclose(sequence.observations[0], [np.cos(0.5), np.sin(0.5), 10.0, 5.0])
    np.testing.assert_allclose(np.hypot(sequence.observations[:, 0], sequence.observations[:, 1]), 1.0)
    assert sequence.meta['classes'] == list(BEE_LABELS)
    assert load_sequence(bee_sample_path()).meta['source'] == 'bee'


def test_bee_unknown_phase_names_row(tmp_path):
    path = write(tmp_path / 'bee.csv', 't,x,y,theta,label\n0,1,2,0.1,waggle\n1,1,2,0.1,hover\n')
    with pytest.raises(DataFormatError, match='row 2') as info:
        load_bee(path)
    assert info.value.row == 2


def test_bee_missing_column(tmp_path):
    path = write(tmp_path / 'bee.csv', 't,x,y,label\n0,1,2,waggle\n')
    with pytest.raises(DataFormatError):
        load_bee(path)


def test_csv_labels_become_contiguous(tmp_path):
    path = write(tmp_path / 'seq.csv', 'dim0,dim1,label\n0.5,1,7\n0.25,2,3\n1e-3,3,7\n')
    sequence = load_csv(path)
    assert sequence.labels.tolist() == [1, 0, 1]
    assert sequence.meta['classes'] == [3, 7]
    np.testing.assert_array_equal(sequence.observations[:, 0], [0.5, 0.25, 1e-3])


def test_csv_without_labels(tmp_path):
    path = write(tmp_path / 'seq.csv', 'dim0\n1\n2\n')
    assert load_sequence(path).labels is None
    with pytest.raises(DataFormatError):
        load_csv(path, require_labels=True)


@pytest.mark.parametrize('text, row', [
    ('dim0,dim1\n1,2\n3,abc\n', 2),
    ('dim0,dim1\n1,\n', 1),
    ('dim0,label\n1,0.5\n', 1),
    ('dim0\n1\nnan\n', 2),
])
def test_csv_bad_cells_name_row(tmp_path, text, row):
    with pytest.raises(DataFormatError) as info:
        load_csv(write(tmp_path / 'bad.csv', text))
    assert info.value.row == row


@pytest.mark.parametrize('text', ['x,y\n1,2\n', 'dim0,dim2\n1,2\n', 'dim0\n', ''])
def test_csv_bad_layout(tmp_path, text):
    with pytest.raises(DataFormatError):
        load_csv(write(tmp_path / 'bad.csv', text))


def test_unknown_kind(tmp_path):
    with pytest.raises(DataFormatError):
        load_sequence(write(tmp_path / 'seq.csv', 'dim0\n1\n'), kind='parquet')


def test_write_then_read_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    sequence = LabeledSequence(rng.standard_normal((50, 3)) * 1e-7 + np.pi, rng.integers(0, 3, 50))
    path = write_csv(sequence, str(tmp_path / 'out.csv'))
    loaded = load_csv(path)
    np.testing.assert_array_equal(loaded.observations, sequence.observations)
    np.testing.assert_array_equal(loaded.labels, sequence.labels)


def test_content_hash_is_git_blob_hash(tmp_path):
    path = tmp_path / 'hello.txt'
    path.write_bytes(b'hello\n')
    assert content_hash(str(path)) == 'ce013625030ba8dba906f756967f9e9ca394464a'
    assert content_hash(str(path)) == hashlib.sha1(b'blob 6\0hello\n').hexdigest()
