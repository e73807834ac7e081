/** Typed client for the study service HTTP JSON API. */

export interface Progress {
  resolved: number;
  total: number;
}

export interface TaskView {
  sample_id: string;
  class_name: string;
  original_url: string;
  overlay_url: string;
  progress: Progress;
}

export interface NextTaskResponse {
  task: TaskView | null;
  progress?: Progress;
}

export interface VoteAck {
  ok: boolean;
  sample_id: string;
  resolved: boolean;
  resolved_label: number | null;
}

export type VoteOutcome =
  | { kind: 'accepted'; ack: VoteAck }
  | { kind: 'already-voted' } // DuplicateVote or ResolvedTask: advance silently
  | { kind: 'rejected'; status: number; message: string };

export class ServiceUnreachable extends Error {
  constructor(cause: unknown) {
    super(`study service unreachable: ${String(cause)}`);
    this.name = 'ServiceUnreachable';
  }
}

const VOTE_RETRIES = 3;
const RETRY_DELAY_MS = 300;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class StudyClient {
  constructor(
    private readonly baseUrl: string,
    private readonly studyId: string,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/studies/${encodeURIComponent(this.studyId)}${path}`;
  }

  mediaUrl(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async register(annotatorId: string): Promise<void> {
    let resp: Response;
    try {
      resp = await fetch(this.url('/annotators'), {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ annotator_id: annotatorId }),
      });
    } catch (err) {
      throw new ServiceUnreachable(err);
    }
    if (!resp.ok) {
      throw new Error(`registration failed with status ${resp.status}`);
    }
  }

  async nextTask(annotatorId: string): Promise<NextTaskResponse> {
    let resp: Response;
    try {
      resp = await fetch(
        this.url(`/tasks/next?annotator=${encodeURIComponent(annotatorId)}`),
      );
    } catch (err) {
      throw new ServiceUnreachable(err);
    }
    if (!resp.ok) {
      throw new Error(`next-task failed with status ${resp.status}`);
    }
    return (await resp.json()) as NextTaskResponse;
  }

  /**
   * Submit one vote. The (sample, annotator) pair is the idempotency key: the
   * service rejects duplicates, so a network failure is retried with the same
   * payload and can never double-count. A 409 (already voted or task resolved
   * meanwhile) maps to 'already-voted' so the caller just advances.
   */
  async submitVote(
    annotatorId: string,
    sampleId: string,
    label: 0 | 1,
  ): Promise<VoteOutcome> {
    const payload = JSON.stringify({
      sample_id: sampleId,
      annotator_id: annotatorId,
      label,
    });
    let lastError: unknown = null;
    for (let attempt = 0; attempt <= VOTE_RETRIES; attempt++) {
      let resp: Response;
      try {
        resp = await fetch(this.url('/votes'), {
          method: 'POST',
          headers: { 'Content-Type': 'application/json' },
          body: payload,
        });
      } catch (err) {
        lastError = err;
        await sleep(RETRY_DELAY_MS);
        continue;
      }
      if (resp.ok) {
        return { kind: 'accepted', ack: (await resp.json()) as VoteAck };
      }
      if (resp.status === 409) {
        return { kind: 'already-voted' };
      }
      return {
        kind: 'rejected',
        status: resp.status,
        message: await resp.text(),
      };
    }
    throw new ServiceUnreachable(lastError);
  }
}
