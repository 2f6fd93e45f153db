"""
Run independent jobs (evaluation episodes, Monte-Carlo rollout
chunks, dataset shards) on a small thread pool.

Each job owns its environment copy and its seed, so results come
back in submission order and do not depend on how the threads
interleave. Parameter snapshots are only read.
"""
import queue
import threading

from tqdm import tqdm

DEFAULT_THREADS = 4

def schedule_serial_jobs(fns, progress=None, total=None):
  return [ fn() for fn in tqdm(fns, desc=progress, total=total, disable=(not progress)) ]

def schedule_threaded_jobs(fns, concurrency=DEFAULT_THREADS, progress=None, total=None):
  fns = list(fns)
  results = [ None ] * len(fns)
  errors = queue.Queue()
  tasks = queue.Queue()
  for index, fn in enumerate(fns):
    tasks.put((index, fn))

  pbar = tqdm(total=(total if total is not None else len(fns)), desc=progress, disable=(not progress))
  lock = threading.Lock()

  def worker():
    while errors.empty():
      try:
        index, fn = tasks.get_nowait()
      except queue.Empty:
        return
      try:
        results[index] = fn()
      except Exception as err:
        errors.put(err)
        return
      with lock:
        pbar.update(1)

  threads = [ threading.Thread(target=worker) for _ in range(min(concurrency, len(fns))) ]
  for thread in threads:
    thread.daemon = True
    thread.start()
  for thread in threads:
    thread.join()
  pbar.close()

  if not errors.empty():
    raise errors.get()

  return results

def schedule_jobs(fns, concurrency=1, progress=None, total=None):
  """
  Given a list of functions, execute them until all complete.

  fns: iterable of zero argument functions
  concurrency: number of threads; 1 or less runs in the caller's thread
  progress: Falsey (no progress), String: Progress + description
  total: If fns is a generator, this is the number of items to be generated.

  Return: list of results in the order of fns
  """
  if concurrency is None or concurrency <= 1:
    return schedule_serial_jobs(fns, progress, total)
  return schedule_threaded_jobs(fns, concurrency, progress, total)
