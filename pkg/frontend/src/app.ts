/**
 * Annotation flow: show the next task's original image beside its activation
 * overlay, collect a 0/1 judgment (buttons or the 1/0 keys), advance without a
 * page reload. Every vote corresponds to exactly one explicit user action; the
 * submit path is disabled while a vote is in flight, so a double-click or
 * double key-press sends a single request.
 */

import { ServiceUnreachable, StudyClient, TaskView } from './api.js';

export class AnnotationApp {
  private annotatorId = '';
  private current: TaskView | null = null;
  private inFlight = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: StudyClient,
  ) {}

  /** Register the annotator and fetch the first task. */
  async start(annotatorId: string): Promise<void> {
    this.annotatorId = annotatorId;
    try {
      await this.client.register(annotatorId);
    } catch (err) {
      this.renderError(err);
      return;
    }
    this.root.addEventListener('keydown', this.onKeyDown);
    await this.advance();
  }

  stop(): void {
    this.root.removeEventListener('keydown', this.onKeyDown);
  }

  get currentTask(): TaskView | null {
    return this.current;
  }

  private onKeyDown = (event: Event): void => {
    const key = (event as KeyboardEvent).key;
    if (key === '1' || key === '0') {
      void this.submit(key === '1' ? 1 : 0);
    }
  };

  /** Submit a label for the displayed task, then advance to the next one. */
  async submit(label: 0 | 1): Promise<void> {
    if (this.inFlight || this.current === null) {
      return;
    }
    this.inFlight = true;
    this.setButtonsEnabled(false);
    try {
      const outcome = await this.client.submitVote(
        this.annotatorId,
        this.current.sample_id,
        label,
      );
      if (outcome.kind === 'rejected') {
        this.renderError(new Error(outcome.message));
        return;
      }
      // 'accepted' and 'already-voted' both advance
      await this.advance();
    } catch (err) {
      this.renderError(err);
    } finally {
      this.inFlight = false;
    }
  }

  private async advance(): Promise<void> {
    try {
      const next = await this.client.nextTask(this.annotatorId);
      if (next.task === null) {
        this.current = null;
        this.renderDone(next.progress?.resolved ?? 0, next.progress?.total ?? 0);
      } else {
        this.current = next.task;
        this.renderTask(next.task);
      }
    } catch (err) {
      this.renderError(err);
    }
  }

  private renderTask(task: TaskView): void {
    this.root.innerHTML = `
      <section class="task" data-sample-id="${escapeHtml(task.sample_id)}">
        <header>
          <span id="class-name">${escapeHtml(task.class_name)}</span>
          <span id="progress">${task.progress.resolved}/${task.progress.total} resolved</span>
        </header>
        <div class="images">
          <figure>
            <img id="original" class="zoomable" data-sample-id="${escapeHtml(task.sample_id)}"
                 src="${this.client.mediaUrl(task.original_url)}" alt="original image">
            <figcaption>original</figcaption>
          </figure>
          <figure>
            <img id="overlay" class="zoomable" data-sample-id="${escapeHtml(task.sample_id)}"
                 src="${this.client.mediaUrl(task.overlay_url)}" alt="activation overlay">
            <figcaption>model evidence</figcaption>
          </figure>
        </div>
        <p class="question">Is the highlighted evidence for <b>${escapeHtml(task.class_name)}</b>
           event-related?</p>
        <div class="buttons">
          <button id="vote-1">1 &mdash; event-related</button>
          <button id="vote-0">0 &mdash; not event-related</button>
        </div>
        <p class="hint">keyboard: 1 / 0</p>
      </section>`;
    this.byId('vote-1').addEventListener('click', () => void this.submit(1));
    this.byId('vote-0').addEventListener('click', () => void this.submit(0));
  }

  private renderDone(resolved: number, total: number): void {
    this.root.innerHTML = `
      <section class="done">
        <h2>No tasks remaining</h2>
        <p>Thank you! Study progress: ${resolved}/${total} tasks resolved.</p>
      </section>`;
  }

  private renderError(err: unknown): void {
    const unreachable = err instanceof ServiceUnreachable;
    this.root.innerHTML = `
      <section class="error-banner">
        <p>${unreachable ? 'Study service unreachable.' : 'Something went wrong.'}</p>
        <pre>${escapeHtml(String(err))}</pre>
        <button id="retry">Retry</button>
      </section>`;
    this.byId('retry').addEventListener('click', () => void this.advance());
  }

  private setButtonsEnabled(enabled: boolean): void {
    for (const id of ['vote-1', 'vote-0']) {
      const el = this.root.querySelector<HTMLButtonElement>(`#${id}`);
      if (el) {
        el.disabled = !enabled;
      }
    }
  }

  private byId(id: string): HTMLElement {
    const el = this.root.querySelector<HTMLElement>(`#${id}`);
    if (!el) {
      throw new Error(`missing element #${id}`);
    }
    return el;
  }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}
