/** Entry point: collect study + annotator ids, then run the annotation flow. */

import { StudyClient } from './api.js';
import { AnnotationApp } from './app.js';

function boot(): void {
  const root = document.getElementById('app');
  if (!(root instanceof HTMLElement)) {
    throw new Error('missing #app container');
  }
  const params = new URLSearchParams(window.location.search);
  const presetStudy = params.get('study') ?? '';

  root.innerHTML = `
    <section class="entry">
      <h1>Annotation study</h1>
      <p>Judge whether the model's highlighted evidence is related to the
         predicted event. Use the buttons or the <b>1</b> / <b>0</b> keys.</p>
      <form id="entry-form">
        <label>Study id
          <input id="study-id" value="${escapeAttr(presetStudy)}" required>
        </label>
        <label>Your name
          <input id="annotator-id" required>
        </label>
        <button type="submit">Start</button>
      </form>
    </section>`;

  const form = root.querySelector<HTMLFormElement>('#entry-form')!;
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const studyId = root.querySelector<HTMLInputElement>('#study-id')!.value.trim();
    const annotatorId = root.querySelector<HTMLInputElement>('#annotator-id')!.value.trim();
    if (!studyId || !annotatorId) {
      return;
    }
    const client = new StudyClient('', studyId);
    const app = new AnnotationApp(root, client);
    void app.start(annotatorId).then(() => root.focus());
  });
}

function escapeAttr(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/"/g, '&quot;').replace(/</g, '&lt;');
}

boot();
