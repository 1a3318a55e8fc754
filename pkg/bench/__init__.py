# Bench 모듈 초기화
