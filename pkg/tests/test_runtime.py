import socket

import pytest

from segflow.runtime import Runtime


def square(job, callback=None):
    if callback is not None:
        callback(job)
    return job * job


def test_serial_runs_callbacks_in_order():
    seen = []
    with Runtime('serial') as runtime:
        assert runtime.launch_chains(square, [1, 2, 3], callbacks=seen.append) == [1, 4, 9]
    assert seen == [1, 2, 3]


def test_process_keeps_job_order():
    with Runtime('process', workers=2) as runtime:
        assert runtime.launch_chains(square, range(6)) == [0, 1, 4, 9, 16, 25]


def test_callbacks_must_match_jobs():
    with pytest.raises(ValueError):
        Runtime('serial').launch_chains(square, [1, 2], callbacks=[None])


@pytest.mark.parametrize('type_', ['slurm', 'threads'])
def test_unsupported_type(type_):
    with pytest.raises(ValueError):
        Runtime(type_)
    runtime = Runtime(' Serial ')
    with pytest.raises(ValueError):
        runtime.type = type_
    assert runtime.type == 'serial'


def test_workers_and_host():
    with pytest.raises(ValueError):
        Runtime('process', workers=0)
    assert Runtime('process').workers >= 1
    assert Runtime().host == socket.gethostname()
