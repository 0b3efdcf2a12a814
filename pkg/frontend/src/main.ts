/** Entry point: a small profile form that starts (or resumes) a session. */

import { SessionApi } from './api.js';
import { AnnotatorConsole } from './console.js';

function bootstrap(): void {
  const root = document.getElementById('console-root');
  const form = document.getElementById('start-form') as HTMLFormElement | null;
  if (!root || !form) return;

  const api = new SessionApi('');
  const view = new AnnotatorConsole(root, api);

  const params = new URLSearchParams(window.location.search);
  const resumeId = params.get('session');
  if (resumeId) {
    void view.resume(resumeId);
    form.style.display = 'none';
    return;
  }

  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const interests: Record<string, number> = {};
    for (const pair of String(data.get('interests') ?? '').split(',')) {
      const [cat, aff] = pair.split(':').map((s) => s.trim());
      if (cat && aff) interests[cat] = Number(aff);
    }
    void view.start({
      user_id: String(data.get('user_id') || 'annotator'),
      age: Number(data.get('age') || 30),
      interests,
    });
    form.style.display = 'none';
  });
}

bootstrap();
