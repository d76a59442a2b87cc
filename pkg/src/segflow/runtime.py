#!/usr/bin/env python3

"""The Runtime class for running independent chains."""

import os
import socket
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Optional, Sequence

import segflow.output as sfout


class Runtime():
    """Class describing where the chains of a fit are executed.

    Two modes are available:

        - **serial**: All chains run one after another in the calling
            process. Callbacks, e.g. an experiment tracker, see every sweep.

        - **process**: Chains are distributed over a pool of worker
            processes. Every job must be picklable and carries its own random
            stream, so the results do not depend on the number of workers or
            on the order in which the chains finish.

    Attributes:
        type (str): Type of runtime. Must be `'serial'` or `'process'`.
        workers (int): Number of worker processes used in process mode.
        host (str): Hostname of the machine running the chains.

    Raises:
        ValueError: If the runtime type is not supported or `workers` is not
            positive.
    """

    TYPES = ['serial', 'process']
    """Supported types of runtime environments."""

    def __init__(self, type_: Optional[str] = 'serial', workers: Optional[int] = None):
        """Initialize the Runtime.

        Args:
            type_ (str, optional): Type of runtime, `'serial'` or `'process'`.
                Defaults to `'serial'`.
            workers (int, optional): Size of the process pool. Defaults to
                the number of available CPUs.
        """
        self.type = type_.casefold().strip()
        if workers is None:
            workers = os.cpu_count() or 1
        if workers < 1:
            raise ValueError(f'Expected at least one worker, but got {workers}!')
        self.workers = workers
        self._pool = None

    def __enter__(self):
        """Context manager to enter the runtime environment."""
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        if self._pool is not None:
            self._pool.shutdown(wait=True, cancel_futures=exc_type is not None)
            self._pool = None

    def info(self):
        """Prints information about the current runtime environment."""
        sfout.info('Configuration of runtime environment:')
        sfout.info(f'  Type:      {self.type}', newline=False)
        sfout.info(f'  Host:      {self.host}', newline=False)
        if self.type == 'process':
            sfout.info(f'  Workers:   {self.workers}', newline=False)

    def launch_chains(self, fn: Callable[[Any], Any], jobs: Sequence[Any],
                      callbacks: Optional[List[Optional[Callable]]] = None) -> List[Any]:
        """Run `fn` on every job and return the results in job order.

        Args:
            fn (callable): Module-level function taking one job.
            jobs (list): One entry per chain.
            callbacks (callable, list, optional): Passed as `callback=` to
                `fn` in serial mode. Either a single callable or a list of
                length `len(jobs)`. Ignored in process mode since callbacks
                cannot cross process boundaries.

        Raises:
            ValueError: If `callbacks` does not match the number of jobs.
            RuntimeError: If a chain fails inside a worker process.
        """
        def _validate_args(arg, n):
            """Validate the length of the arguments."""
            if isinstance(arg, list) and not len(arg) == n:
                raise ValueError(f'Expected {n} entries, but got {len(arg)}!')
            if not isinstance(arg, list):
                return [arg] * n
            return arg

        jobs = list(jobs)
        callbacks = _validate_args(callbacks, len(jobs))

        if self.type == 'serial' or len(jobs) < 2:
            return [fn(job, callback=callback) for job, callback in zip(jobs, callbacks)]

        if self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=min(self.workers, len(jobs)))
        futures = [self._pool.submit(fn, job) for job in jobs]
        results = []
        for i, future in enumerate(futures):
            try:
                results.append(future.result())
            except (ValueError, RuntimeError, OSError):
                raise
            except Exception as e:
                raise RuntimeError(f'Chain {i} failed in a worker process!') from e
        return results

    @property
    def type(self) -> str:
        """Get the type of the runtime environment.

        Returns:
            str: Type of the runtime environment.
        """
        return self._type

    @type.setter
    def type(self, value: str):
        """Set the type of environment used for the runtime.

        Validates that the type is actually supported.

        Args:
            value (str): Type of the runtime environment.
        """
        if value not in self.TYPES:
            raise ValueError(f'Runtime of type {value} not supported.')
        self._type = value

    @property
    def host(self) -> str:
        """Return name of the machine this instance is located on.

        Returns:
            str: Hostname of the local machine.
        """
        return socket.gethostname()
